use std::collections::HashMap;

use nalgebra::DVector;

/// Clebsch-Gordan coefficients <j1 m1 j2 m2 | J M> built by lowering the
/// stretched state and Gram-Schmidt, Condon-Shortley phases.
pub fn clebsch_gordan_table(tj1: i32, tj2: i32) -> HashMap<(i32, i32, i32, i32), f64> {
    let m1s: Vec<i32> = (0..=tj1).map(|k| tj1 - 2 * k).collect();
    let m2s: Vec<i32> = (0..=tj2).map(|k| tj2 - 2 * k).collect();
    let basis: Vec<(i32, i32)> = m1s.iter().flat_map(|&a| m2s.iter().map(move |&b| (a, b))).collect();
    let index: HashMap<(i32, i32), usize> = basis.iter().enumerate().map(|(i, &s)| (s, i)).collect();
    let lower = |v: &DVector<f64>| -> DVector<f64> {
        let mut out = DVector::zeros(basis.len());
        for (i, &(a, b)) in basis.iter().enumerate() {
            if v[i] == 0.0 {
                continue;
            }
            let (j1, j2, m1, m2) = (tj1 as f64 / 2.0, tj2 as f64 / 2.0, a as f64 / 2.0, b as f64 / 2.0);
            if a > -tj1 {
                out[index[&(a - 2, b)]] += v[i] * (j1 * (j1 + 1.0) - m1 * (m1 - 1.0)).sqrt();
            }
            if b > -tj2 {
                out[index[&(a, b - 2)]] += v[i] * (j2 * (j2 + 1.0) - m2 * (m2 - 1.0)).sqrt();
            }
        }
        out
    };
    let mut states: HashMap<(i32, i32), DVector<f64>> = HashMap::new();
    let mut tj = tj1 + tj2;
    while tj >= (tj1 - tj2).abs() {
        let mut top = DVector::zeros(basis.len());
        // seed with every product state of M = J, then project out higher J
        for (i, &(a, b)) in basis.iter().enumerate() {
            if a + b == tj {
                top[i] = 1.0 + i as f64;
            }
        }
        for _ in 0..2 {
            for ((_, m), v) in states.iter() {
                if *m == tj {
                    let p = v.dot(&top);
                    top -= v * p;
                }
            }
            top /= top.norm();
        }
        top /= top.norm();
        if top[index[&(tj1, tj - tj1)]] < 0.0 {
            top = -top;
        }
        let mut cur = top;
        let mut m = tj;
        loop {
            states.insert((tj, m), cur.clone());
            if m == -tj {
                break;
            }
            cur = lower(&cur);
            cur /= cur.norm();
            m -= 2;
        }
        tj -= 2;
    }
    let mut out = HashMap::new();
    for ((j, m), v) in states {
        for (i, &(a, b)) in basis.iter().enumerate() {
            out.insert((a, b, j, m), v[i]);
        }
    }
    out
}
