//! Build both dictionary kinds, check the semi-unitary property on the
//! materialized matrix, and compare structured apply times.

use std::time::Instant;

use msamp::dictionary::{DictionaryKind, SemiUnitaryDictionary};
use msamp::error::Result;
use msamp::linalg::{frob, identity};
use msamp::rng::{standard_complex_matrix, stream};

fn main() -> Result<()> {
    let (l, n) = (64, 128);
    let alpha = n as f64 / l as f64;
    for kind in [DictionaryKind::DenseHaar, DictionaryKind::SignedFourier] {
        let dict = SemiUnitaryDictionary::build(kind, l, n, 1, "demo")?;
        let s = dict.materialize();
        let gram_err = frob(&(&s * s.adjoint() - identity(l).scale(alpha)));
        println!("{kind:>8}: L={l} N={n}  ‖SS† − αI‖_F = {gram_err:.2e}");
    }

    println!("\napply time for one L×L dictionary (2 payload columns):");
    for exp in [12usize, 13, 14] {
        let l = 1 << exp;
        let mut row = format!("  L = 2^{exp:<2}");
        for kind in [DictionaryKind::DenseHaar, DictionaryKind::SignedFourier] {
            let dict = SemiUnitaryDictionary::build(kind, l, l, 1, "demo/time")?;
            let x = standard_complex_matrix(l, 2, &mut stream(1, "demo/x"));
            let start = Instant::now();
            let y = dict.apply(&x)?;
            std::hint::black_box(&y);
            row += &format!("   {kind}: {:>8.2} ms", start.elapsed().as_secs_f64() * 1e3);
        }
        println!("{row}");
    }
    Ok(())
}
