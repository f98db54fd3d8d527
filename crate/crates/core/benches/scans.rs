use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use steinplanes::certify::{self, RhoSpec};
use steinplanes::exec::Execution;
use steinplanes::flow::{self, FlowOptions};
use steinplanes::normal_form::{CaseTag, NormalForm};
use steinplanes::poly::rat;

const MODES: [(&str, Execution); 2] = [("sequential", Execution::Sequential), ("parallel", Execution::Parallel)];

fn positivity(c: &mut Criterion) {
    let fl = certify::extract_p(&RhoSpec::symbolic(CaseTag::Diag, 1, 1)).unwrap();
    let mut g = c.benchmark_group("positivity_scan_20k");
    g.sample_size(10);
    for (name, exec) in MODES {
        g.bench_function(BenchmarkId::from_parameter(name), |b| {
            b.iter(|| certify::positivity_scan(&fl.p, 1e-10, 1e-10, 20_000, 1, exec))
        });
    }
    g.finish();
}

fn pseudoconvexity(c: &mut Criterion) {
    let nf = NormalForm::from_params(CaseTag::NonDiag, rat(0, 1), rat(1, 1_000_000)).unwrap();
    let pf = flow::build_patched(&nf, 1.0, 1e-3).unwrap();
    let mut g = c.benchmark_group("pseudoconvexity_scan_10k");
    g.sample_size(10);
    for (name, exec) in MODES {
        g.bench_function(BenchmarkId::from_parameter(name), |b| {
            b.iter(|| flow::pseudoconvexity_scan(&pf, 1e-3, 10_000, 1, exec).unwrap())
        });
    }
    g.finish();
}

fn flows(c: &mut Criterion) {
    let nf = NormalForm::from_params(CaseTag::Diag, rat(0, 1), rat(0, 1)).unwrap();
    let pf = flow::build_patched(&nf, 1.0, 1e-3).unwrap();
    let starts = flow::sublevel_starts(&pf, 1e-3, 100, 1);
    let opts = FlowOptions::default();
    let mut g = c.benchmark_group("flow_100");
    g.sample_size(10);
    for (name, exec) in MODES {
        g.bench_function(BenchmarkId::from_parameter(name), |b| {
            b.iter(|| exec.map_slice(&starts, |s| flow::flow_integrate(&pf, s, &opts)))
        });
    }
    g.finish();
}

criterion_group!(benches, positivity, pseudoconvexity, flows);
criterion_main!(benches);
