//! Write a synthetic dataset drawn from the `[dgp]` section of a config.
//!
//! ```text
//! cargo run -p ecrt --example synthetic -- configs/acceptance.toml clusters.csv individuals.csv
//! ```

use std::path::PathBuf;

use ecrt::{load_dataset, write_csv, RunConfig};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let args: Vec<PathBuf> = std::env::args_os().skip(1).map(PathBuf::from).collect();
    let [config, clusters, individuals] = args.as_slice() else {
        return Err("usage: synthetic <config.toml> <clusters.csv> <individuals.csv>".into());
    };
    let cfg = RunConfig::from_path(config)?;
    if cfg.data.is_some() {
        return Err("the config reads data from files; it needs a [dgp] section instead".into());
    }
    let ds = load_dataset(&cfg)?.dataset;
    write_csv(&ds, clusters, individuals)?;
    eprintln!("{} clusters, {} individuals", ds.len(), ds.total_individuals());
    Ok(())
}
