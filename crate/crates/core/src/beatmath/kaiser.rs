/// Zeroth-order modified Bessel function of the first kind, by power series.
///
/// `I0(x) = sum_k ((x/2)^k / k!)^2`, summed until a term drops below
/// `1e-12` of the running total.
pub fn bessel_i0(x: f64) -> f64 {
    let half = x / 2.0;
    let mut term = 1.0;
    let mut sum = 1.0;
    let mut k = 1.0;
    loop {
        let ratio = half / k;
        term *= ratio * ratio;
        sum += term;
        if term < 1e-12 * sum {
            break;
        }
        k += 1.0;
    }
    sum
}

/// Averaging weights for ranks `1..=count`, taken from the descending half
/// of a length `2*count - 1` Kaiser window and normalised to sum to one.
///
/// Element `r - 1` of the result is the weight of the beat with rank `r`.
pub fn kaiser_weights(count: usize, beta: f64) -> Vec<f64> {
    match count {
        0 => return Vec::new(),
        1 => return vec![1.0],
        _ => {}
    }
    let len = 2 * count - 1;
    let denom = bessel_i0(beta);
    let span = (len - 1) as f64;
    let mut w: Vec<f64> = ((count - 1)..len)
        .map(|m| {
            let t = 2.0 * m as f64 / span - 1.0;
            let arg = (1.0 - t * t).max(0.0).sqrt();
            bessel_i0(beta * arg) / denom
        })
        .collect();
    let total: f64 = w.iter().sum();
    for v in &mut w {
        *v /= total;
    }
    w
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bessel_reference_values() {
        // Abramowitz & Stegun table 9.8
        assert!((bessel_i0(0.0) - 1.0).abs() < 1e-15);
        assert!((bessel_i0(1.0) - 1.266_065_877_752_008).abs() < 1e-12);
        assert!((bessel_i0(6.0) - 67.234_406_976_477_96).abs() < 1e-9);
    }

    #[test]
    fn degenerate_and_uniform() {
        assert_eq!(kaiser_weights(1, 6.0), vec![1.0]);
        for b in 2..12 {
            let w = kaiser_weights(b, 0.0);
            for v in w {
                assert!((v - 1.0 / b as f64).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn three_beats_beta_six() {
        // descending half of a length-5 window: t = 0, 0.5, 1
        let raw = [
            1.0,
            bessel_i0(6.0 * 0.75f64.sqrt()) / bessel_i0(6.0),
            1.0 / bessel_i0(6.0),
        ];
        let s: f64 = raw.iter().sum();
        let w = kaiser_weights(3, 6.0);
        assert!(w[0] > w[1] && w[1] > w[2]);
        assert!((w.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        for (a, b) in w.iter().zip(raw.iter()) {
            assert!((a - b / s).abs() < 1e-12);
        }
    }
}
