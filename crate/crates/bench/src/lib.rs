//! Shared fixtures for the benchmarks.

use cpmarkov::models::{random_block_model, random_partial_trace_model, Model};
use cpmarkov::qfgr::{QfgrSystem, QuantumPopulations};
use cpmarkov::CMatrix;

pub fn partial_trace(dim_b: usize) -> Model {
    random_partial_trace_model(17, 2, dim_b).expect("fixture model")
}

pub fn qfgr_fixture(dim: usize, blocks: usize) -> (QfgrSystem, QuantumPopulations) {
    let m = random_block_model(17, dim, blocks).expect("fixture model");
    let s = QfgrSystem::build(&m.projection, &m.h0, &m.hp, 0.2, 1.0).expect("fixture system");
    let first = s.blocks()[0][0];
    let mut rho = CMatrix::zeros(dim, dim);
    rho[(first, first)] = 1.0.into();
    let p0 = QuantumPopulations::from_state(s.blocks(), &rho, 0.0).expect("fixture state");
    (s, p0)
}
