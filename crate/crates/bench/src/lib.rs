//! Shared fixtures for the benchmarks.

use clinn::config::RunConfig;
use clinn::loss::Method;
use clinn::network::NetworkParams;
use clinn::problems::{get_problem, sample_grid, CaseId, CollocationSet, ProblemSpec};
use clinn::trainer::initial_params;

/// A problem, its desk-scale collocation set and freshly initialized parameters.
pub struct Fixture {
    pub spec: ProblemSpec,
    pub coll: CollocationSet,
    pub params: NetworkParams,
}

pub fn desk_fixture(case: CaseId, method: Method) -> Fixture {
    let cfg = RunConfig::desk(case, method, 7);
    let spec = get_problem(case);
    let coll = sample_grid(&spec, cfg.grid_nx, cfg.grid_nt).expect("desk grid is valid");
    let params = initial_params(&cfg).expect("desk config is valid");
    Fixture { spec, coll, params }
}
