#![allow(dead_code)]

use std::path::PathBuf;
use std::sync::Arc;

use burst_pide::config::{ModelBlock, RunConfig};
use burst_pide::grid::CellGrid;
use burst_pide::model::{ModelSpec1D, ModelSpecND};

pub const ONE_GENE: [&str; 5] = ["shape1", "shape2", "shape3", "shape4", "shape5"];

pub fn fixture_path(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("fixtures").join(format!("{name}.toml"))
}

pub fn fixture(name: &str) -> RunConfig {
    RunConfig::load(&fixture_path(name)).unwrap()
}

pub fn one_gene(config: &RunConfig) -> ModelSpec1D {
    match &config.model {
        ModelBlock::OneGene(m) => *m,
        ModelBlock::Network(_) => panic!("expected a one-gene fixture"),
    }
}

pub fn network(config: &RunConfig) -> ModelSpecND {
    match &config.model {
        ModelBlock::Network(m) => m.clone(),
        ModelBlock::OneGene(_) => panic!("expected a network fixture"),
    }
}

pub fn grid_for(config: &RunConfig, spec: &ModelSpec1D, cells: usize) -> Arc<CellGrid> {
    let mut g = config.grid.clone();
    g.cells = cells;
    Arc::new(g.build(spec.a, spec.b, spec.k).unwrap())
}
