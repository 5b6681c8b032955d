//! The 13-gram overlap baseline, pairwise and against an indexed benchmark.

use contam_audit::token::{ngram_overlap, NgramIndex};

fn main() -> contam_audit::Result<()> {
    let benchmark = [
        "A farmer has 17 sheep and all but 9 run away. How many sheep does the farmer have left now?",
        "If a train travels 60 miles in 1.5 hours, what is its average speed in miles per hour?",
    ];
    let copied = "Quiz: a farmer has 17 sheep and all but 9 run away. How many sheep does the farmer have left now?";
    let reworded = "Seventeen sheep belong to a farmer; all except nine escape. How many remain with the farmer?";

    for text in [copied, reworded] {
        let o = ngram_overlap(text, benchmark[0], 13)?;
        println!("ratio {:.2} matched {:<5} | {text}", o.ratio, o.matched);
    }

    let index = NgramIndex::new(benchmark, 13);
    println!("index hits: copied={} reworded={}", index.matches(copied), index.matches(reworded));
    Ok(())
}
