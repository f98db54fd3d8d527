pub mod exec;
pub mod numeric;
pub mod poly;
pub mod normal_form;
pub mod levi;
pub mod sphere;
pub mod certify;
pub mod flow;
pub mod report;
