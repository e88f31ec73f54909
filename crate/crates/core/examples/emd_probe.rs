//! Scratch: transport solver timing at eval scale.

use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use usb_core::eval::w1;
use usb_core::inference::WeightedCloud;
use usb_core::Matrix;

fn cloud(rng: &mut ChaCha8Rng, n: usize, spread: f64, shift: f64) -> WeightedCloud {
    let rows: Vec<Vec<f64>> = (0..n)
        .map(|_| {
            vec![shift + spread * rng.random_range(-1.0..1.0), spread * rng.random_range(-1.0..1.0)]
        })
        .collect();
    WeightedCloud {
        points: Matrix::from_rows(&rows).unwrap(),
        log_weights: (0..n).map(|_| rng.random_range(0.0_f64..0.5)).collect(),
        time: 0.0,
    }
}

fn main() {
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    for n in [200usize, 400, 700] {
        let a = cloud(&mut rng, n, 1.0, 0.0);
        let b = cloud(&mut rng, n + 100, 1.0, 0.3);
        let t = Instant::now();
        let d = w1(&a, &b).unwrap();
        println!("n={n}: w1={d:.4} in {:?}", t.elapsed());
    }
    // bimodal clouds like the gene data
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mk = |rng: &mut ChaCha8Rng, n1: usize, n2: usize| {
        let mut rows: Vec<Vec<f64>> = (0..n1)
            .map(|_| {
                vec![
                    3.0 + 0.2 * rng.random_range(-1.0..1.0),
                    0.1 + 0.2 * rng.random_range(-1.0..1.0),
                ]
            })
            .collect();
        rows.extend((0..n2).map(|_| {
            vec![0.1 + 0.2 * rng.random_range(-1.0..1.0), 3.0 + 0.2 * rng.random_range(-1.0..1.0)]
        }));
        WeightedCloud {
            points: Matrix::from_rows(&rows).unwrap(),
            log_weights: vec![0.0; n1 + n2],
            time: 0.0,
        }
    };
    let a = mk(&mut rng, 300, 400);
    let b = mk(&mut rng, 320, 480);
    let t = Instant::now();
    let d = w1(&a, &b).unwrap();
    println!("bimodal 700x800: w1={d:.4} in {:?}", t.elapsed());
}
