//! Size, fingerprint and a few members of each shipped space.
//!
//! `cargo run --example enumerate_space -- sequence_a_analog`

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use solver_select::config_space::builtin;

fn main() {
    let names: Vec<String> = match std::env::args().nth(1) {
        Some(n) => vec![n],
        None => vec!["example_fig2".into(), "synthetic".into(), "sequence_a_analog".into()],
    };
    for name in names {
        let Some(space) = builtin::by_name(&name) else {
            eprintln!("unknown space {name}");
            std::process::exit(2);
        };
        println!(
            "{name}: {} configurations, encoding length {}, fingerprint {}",
            space.size(),
            space.encoding_length(),
            space.fingerprint()
        );
        let all = space.enumerate();
        for c in all.iter().take(3) {
            println!("  first  {c}");
        }
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..3 {
            let c = space.sample_random(&mut rng);
            println!("  random #{:<5} {c}", space.index_of(&c).unwrap());
        }
    }
}
