//! Level 4: accuracy drop from original benchmark items to paraphrased
//! variants, with a paired t-test.

use contam_audit::cliff::{flag_cliff, synthetic_cliff_matrix};
use contam_audit::ThresholdConfig;

fn main() -> contam_audit::Result<()> {
    let cfg = ThresholdConfig::default();
    for (orig, variant) in [(164, 128), (150, 150)] {
        let matrix = synthetic_cliff_matrix(200, orig, variant, cfg.cliff_variants)?;
        let r = flag_cliff(&matrix, &cfg)?;
        println!(
            "acc {:.2} -> {:.2}: delta {:.3}, t {:?}, p {:.2e}, flagged {}",
            r.acc_orig, r.acc_variants[0], r.delta, r.t_stat, r.p_value, r.flagged
        );
    }
    Ok(())
}
