//! Combine task feature spaces by plain, power-weighted and literal
//! power-mean averaging.

use brain_ensemble::ensemble::{
    average_embeddings, literal_power_mean, literal_weighted_average, power_weights,
    weighted_average,
};
use brain_ensemble::synthetic::{generate, SyntheticConfig};

fn main() -> brain_ensemble::Result<()> {
    let data = generate(&SyntheticConfig::default())?;
    let tasks: Vec<_> = data.tasks.iter().map(|t| t.data().clone()).collect();

    let avg = average_embeddings(&tasks)?;
    println!("average: {} x {}", avg.nrows(), avg.ncols());

    // e.g. per-task validation 2v2 accuracies
    let accuracy = [0.81, 0.74, 0.78, 0.69, 0.80];
    for p in [0.5, 1.0, 2.0, 5.0, 10.0] {
        let w = power_weights(&accuracy, p)?;
        let combined = weighted_average(&tasks, &w)?;
        let shift = (&combined - &avg).abs().max();
        let pretty: Vec<String> = w.as_slice().iter().map(|v| format!("{v:.3}")).collect();
        println!(
            "p = {p:>4}: weights [{}], max |weighted - average| {shift:.3}",
            pretty.join(", ")
        );
    }

    let literal = literal_power_mean(&accuracy, 5.0)?;
    let lit = literal_weighted_average(&tasks, &literal)?;
    let ratio = lit[(0, 0)] / avg[(0, 0)];
    println!(
        "literal power mean at p = 5 gives every task {:.4}; result is {ratio:.4} x average",
        literal.as_slice()[0]
    );
    Ok(())
}
