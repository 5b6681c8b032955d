//! Level 1: Min-K% scoring of per-token log-probabilities.

use contam_audit::token::{flag_token_level, min_k_score};

fn main() -> contam_audit::Result<()> {
    let memorized = [-0.3, -0.1, -0.6, -0.2, -0.4, -0.5, -0.2, -0.3, -0.1, -0.7];
    let novel = [-0.3, -4.8, -0.6, -7.2, -2.9, -0.5, -6.1, -0.3, -5.5, -0.7];

    for (name, lp) in [("memorized", &memorized[..]), ("novel", &novel[..])] {
        let score = min_k_score(lp, 20.0)?;
        let flagged = flag_token_level(&score, 3.5, false);
        println!(
            "{name:>9}: mean of lowest {} log-probs = {:.2}, flagged = {flagged}",
            score.k_used, score.value
        );
    }
    Ok(())
}
