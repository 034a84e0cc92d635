//! Write an experiment in TOML, add measurements from CSV and train it.

use ltpinn::experiment::{Experiment, ExperimentConfig};
use ltpinn::training::History;

const CONFIG: &str = r#"
name = "two-cylinder-sketch"
seed = 7

[mode]
kind = "lt"

[pde]
kind = "steady-ns"
Re = 1.0

[network]
n_layers = 3
width = 24

[domain]
collocation = [24, 12]
data_outside_core = true

[domain.roi]
x_min = -2.0
x_max = 5.0
y_min = -2.0
y_max = 2.0

[domain.core]
x_min = -1.0
x_max = 4.0
y_min = -1.0
y_max = 1.0

[patches]
count = 2
initial = [[0.0, 0.2], [3.0, -0.2]]
ring_samples = 16

[patches.bc]
kind = "dirichlet"
value = [0.0, 0.0]

[[topology.pairs]]
i = 0
j = 1
distance = 2.5

[weights]
lambda_p = 1.0
lambda_b = 10.0
lambda_d = 10.0
lambda_t = 1.0

[[data.edges]]
edge = "left"
n = 24
components = [0, 1]
values = [1.0, 0.0]

[[data.edges]]
edge = "right"
n = 24
components = [2]
values = [0.0]

[training]
lr = 1e-3
epochs = 100
log_interval = 25

[output]
dir = "runs/two-cylinder-sketch"
"#;

fn main() -> ltpinn::Result<()> {
    let mut cfg = ExperimentConfig::from_toml(CONFIG)?;
    // interior measurements in the sample-set CSV format
    let csv_path = std::env::temp_dir().join("ltpinn-measurements.csv");
    std::fs::write(&csv_path, "x,y,role,owner,ring_radius,v0,v1,v2\n-1.5,1.5,measurement,,,1.0,0.0,\n4.5,-1.5,measurement,,,1.0,,0.0\n")?;
    cfg.data.csv = Some(csv_path.clone());
    let mut exp = Experiment::build(&cfg)?;
    println!("{} collocation, {} boundary, {} measurements", exp.samples.collocation.len(), exp.samples.boundary.len(), exp.samples.measurements.len());
    exp.train(&mut History::default(), |epoch, loss, gamma| {
        println!("epoch {epoch:>4}  loss {:.4e}  distance {:.4}", loss.total, (gamma[0][0] - gamma[1][0]).hypot(gamma[0][1] - gamma[1][1]));
    })?;
    std::fs::remove_file(csv_path)?;
    Ok(())
}
