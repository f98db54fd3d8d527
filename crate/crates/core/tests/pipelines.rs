use steinplanes::report::{self, Command, ReportError, RunConfig, Status};
use steinplanes::normal_form::CaseTag;
use steinplanes::poly::rat;

fn config(command: Command, case: Option<CaseTag>) -> RunConfig {
    let mut c = RunConfig::new(command);
    c.case = case;
    c
}

#[test]
fn certify_diag_is_exact() {
    let r = report::run(config(Command::Certify, Some(CaseTag::Diag))).unwrap();
    assert_eq!(r.status, Status::Pass);
    assert!(r.certificates.iter().all(|c| c.exact));
    assert!(r.certificates.len() > 10);
    assert_eq!(r.exit_code(), 0);
}

#[test]
fn certify_higher_exponents() {
    let mut c = config(Command::Certify, Some(CaseTag::ComplexEig));
    c.alpha = 2;
    let r = report::run(c).unwrap();
    assert_eq!(r.status, Status::Pass);
    let mut c = config(Command::Certify, Some(CaseTag::Diag));
    c.beta = 0;
    assert_eq!(report::run(c).unwrap_err().exit_code(), 2);
}

#[test]
fn bound_reports_delta() {
    let mut c = config(Command::Bound, Some(CaseTag::Diag));
    c.samples = Some(500);
    let r = report::run(c).unwrap();
    let b = r.bound.as_ref().unwrap();
    assert_eq!((b.n0, b.n1.as_str(), b.delta.as_str()), (146, "741312", "7/2116528128"));
    assert_eq!(r.scans.len(), 20);
    assert_eq!(r.status, Status::Pass);
}

#[test]
fn flow_diag_converges() {
    let mut c = config(Command::Flow, Some(CaseTag::Diag));
    c.a = Some(rat(0, 1));
    c.d = Some(rat(0, 1));
    c.eps = Some(1e-3);
    let (r, traces) = report::run_flow(c).unwrap();
    let f = r.flows.as_ref().unwrap();
    assert_eq!((f.runs, f.converged), (100, 100));
    assert_eq!(traces.len(), 100);
    assert_eq!(r.status, Status::Pass);
}

#[test]
fn scan_outside_box_is_not_asserted() {
    let mut c = config(Command::Scan, Some(CaseTag::Diag));
    c.d = Some(rat(10, 1));
    c.samples = Some(1000);
    let r = report::run(c).unwrap();
    assert!(r.scans.iter().all(|s| !s.asserted));
    assert_eq!(r.status, Status::Pass);
    assert!(!r.warnings.is_empty());
}

#[test]
fn normalize_examples() {
    let mut c = config(Command::Normalize, None);
    c.input = Some("A = 0 -2 ; 2 0\n".into());
    let r = report::run(c).unwrap();
    let nf = r.normal_form.as_ref().unwrap();
    assert_eq!((nf.case.as_str(), nf.a.as_str(), nf.d.as_str(), nf.weinstock), ("complex", "0", "2", false));
    assert!(r.warnings[0].contains("WEINSTOCK"));

    let mut c = config(Command::Normalize, None);
    c.input = Some("M = 0 1 0 0 ; 0 0 0 1\nN = 1 0 0 0 ; 0 0 1 0\n".into());
    let r = report::run(c).unwrap();
    let nf = r.normal_form.as_ref().unwrap();
    assert_eq!((nf.case.as_str(), nf.a.as_str(), nf.d.as_str(), nf.weinstock), ("diag", "0", "0", true));

    let mut c = config(Command::Normalize, None);
    c.input = Some("# header\nA = 1 2 ; 3\n".into());
    match report::run(c) {
        Err(e @ ReportError::Input(_)) => {
            assert_eq!(e.exit_code(), 2);
            assert!(e.to_string().contains("line 2"), "{e}");
        }
        other => panic!("{other:?}"),
    }
}

#[test]
fn missing_case_is_a_usage_error() {
    assert_eq!(report::run(config(Command::Bound, None)).unwrap_err().exit_code(), 2);
}
