//! Level 3: comparing chain-of-thought traces by structure, step wording and
//! arguments.

use contam_audit::reasoning::{parse_trace, reasoning_similarity, Weights};

fn main() -> contam_audit::Result<()> {
    let benchmark = parse_trace(
        "Step 1: The shop sells 12 pens each morning, so the morning total is 12. \
         Step 2: Since the afternoon sales double the morning, the afternoon total is 24. \
         Step 3: Therefore the daily total is 36.",
    )?;
    let cloned = parse_trace(
        "Step 1: The shop sells 15 pens each morning, so the morning total is 15. \
         Step 2: Since the afternoon sales double the morning, the afternoon total is 30. \
         Step 3: Therefore the daily total is 45.",
    )?;
    let independent = parse_trace("Morning: 12 pens.\nAfternoon: 2 * 12 = 24.\nTotal: 36.")?;

    println!("benchmark split by {:?} into {} steps", benchmark.rule, benchmark.len());
    for (name, trace) in [("cloned", &cloned), ("independent", &independent)] {
        let s = reasoning_similarity(&benchmark, trace, Weights::default());
        println!(
            "{name:>11}: structure {:.2} steps {:.2} args {:.2} combined {:.3}",
            s.struct_sim, s.step_sim, s.arg_sim, s.combined
        );
    }
    Ok(())
}
