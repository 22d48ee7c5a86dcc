//! Stage latency as the world grows, next to a brute-force scan.

fn main() -> priormap::Result<()> {
    println!("{}", priormap::sim::BenchRow::header());
    for row in priormap::sim::bench(&[100, 1_000, 10_000, 100_000], 50, 1)? {
        println!("{}", row.line());
    }
    Ok(())
}
