//! Text report for the three-step two-level example.

use std::fmt::Write as _;

use anyhow::Result;
use mixeddyn::baselines::{exact_posterior, greedy_with_costs, trellis_table, TwoLevelScenario};
use mixeddyn::model::{ModelParams, SequenceData};
use mixeddyn::variational::{self, EStepOptions, Init};

/// Input level of each discrete state, as printed.
fn level(state: usize) -> &'static str {
    ["-1", "+1"][state]
}

fn levels(path: &[usize]) -> String {
    path.iter().map(|&s| level(s)).collect::<Vec<_>>().join(" ")
}

/// Integers print without a fraction so the noiseless costs read as in the
/// trellis.
fn cost(c: f64) -> String {
    if c.fract() == 0.0 && c.abs() < 1e15 {
        format!("{c:.0}")
    } else {
        format!("{c:.4}")
    }
}

pub fn report(k: f64, r: f64, eps: f64) -> Result<String> {
    let sc = TwoLevelScenario::new(k, r, eps)?;
    let y = TwoLevelScenario::<f64>::observations();
    let filter = sc.filter_model();
    let costs = sc.arc_costs();
    let mut out = String::new();
    let _ = writeln!(out, "k = {k}, R = {r}, eps = {eps}");
    let obs: Vec<String> = y.observations.iter().map(|o| format!("{}", o[0])).collect();
    let _ = writeln!(out, "observations: {}", obs.join(" "));
    let _ = writeln!(out);

    let table = trellis_table(&filter, &y, &costs, 8)?;
    let _ = writeln!(out, "trellis costs");
    let _ = writeln!(out, "{:<12} cost", "inputs");
    for (path, c) in &table {
        let _ = writeln!(out, "{:<12} {}", levels(path), cost(*c));
    }
    let _ = writeln!(out);

    let g = greedy_with_costs(&filter, &y, &costs)?;
    let steps: Vec<String> = g.step_costs.iter().map(|&c| cost(c)).collect();
    let _ = writeln!(out, "greedy path: {}", levels(&g.path));
    let _ = writeln!(out, "greedy step costs: {}", steps.join(" "));
    let _ = writeln!(out, "greedy cost: {}", cost(g.total_cost));
    // Ties go to the first path in lexicographic order.
    let (best, best_cost) = table
        .iter()
        .fold(&table[0], |b, e| if e.1 < b.1 { e } else { b });
    let _ = writeln!(out, "exact MAP path: {}", levels(best));
    let _ = writeln!(out, "exact MAP cost: {}", cost(*best_cost));

    match sc.model() {
        Ok(model) => {
            let ex = exact_posterior(&model, &y)?;
            let _ = writeln!(out, "posterior MAP path: {}", levels(&ex.map_path));
            if k > 0.0 {
                let _ = writeln!(out);
                variational_trace(&mut out, &model, &y)?;
            } else {
                let _ = writeln!(out);
                let _ = writeln!(out, "variational trace: needs state noise (k > 0)");
            }
        }
        Err(e) => {
            let _ = writeln!(out, "posterior MAP path: unavailable ({e})");
        }
    }
    Ok(out)
}

/// Sweeps from flat soft evidence, one row per sweep: the log-odds of the
/// `-1` level fed to the discrete chain and the input fed to the continuous
/// chain.
fn variational_trace(out: &mut String, model: &ModelParams, y: &SequenceData) -> Result<()> {
    let opts = EStepOptions {
        tol: 1e-9,
        max_iter: variational::DEFAULT_MAX_ITER,
    };
    let (state, post) = variational::e_step(model, y, &Init::flat(y.len(), 2), opts)?;
    let len = y.len();
    let _ = writeln!(out, "variational iterations");
    let mut header = vec!["Iter.".to_string()];
    header.extend((1..=len).map(|t| format!("q{t}(-1)")));
    header.extend((1..=len).map(|t| format!("u{t}")));
    let _ = writeln!(out, "{}", header.iter().map(|h| format!("{h:>8}")).collect::<String>());
    for (i, (log_q, u)) in state.history.iter().enumerate() {
        let mut row = format!("{:>8}", i + 1);
        for lq in log_q {
            let _ = write!(row, "{:>8.3}", lq[0] - lq[1]);
        }
        for ut in u {
            let _ = write!(row, "{:>8.3}", ut[0]);
        }
        let _ = writeln!(out, "{row}");
    }
    let path: Vec<usize> = post.s_mean.iter().map(|s| usize::from(s[1] > s[0])).collect();
    let _ = writeln!(out, "variational path: {}", levels(&path));
    let _ = writeln!(out, "variational bound: {:.6}", state.bound());
    Ok(())
}
