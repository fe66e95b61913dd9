//! Symmetric quadrature rules on simplices in barycentric coordinates.
//! Weights are normalized to sum to one; multiply by the simplex measure.

#[derive(Clone, Debug)]
pub struct Rule {
    pub points: Vec<Vec<f64>>,
    pub weights: Vec<f64>,
}

impl Rule {
    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    fn normalized(mut self) -> Self {
        let s: f64 = self.weights.iter().sum();
        self.weights.iter_mut().for_each(|w| *w /= s);
        self
    }
}

fn push_perms(rule: &mut Rule, bary: &[f64], w: f64) {
    let mut seen: Vec<Vec<f64>> = Vec::new();
    let n = bary.len();
    let mut idx: Vec<usize> = (0..n).collect();
    // Heap's algorithm over index permutations, deduplicated by value.
    let mut c = vec![0; n];
    let emit = |idx: &[usize], seen: &mut Vec<Vec<f64>>| {
        let p: Vec<f64> = idx.iter().map(|&k| bary[k]).collect();
        if !seen.iter().any(|q| q == &p) {
            seen.push(p);
        }
    };
    emit(&idx, &mut seen);
    let mut i = 0;
    while i < n {
        if c[i] < i {
            if i % 2 == 0 {
                idx.swap(0, i);
            } else {
                idx.swap(c[i], i);
            }
            emit(&idx, &mut seen);
            c[i] += 1;
            i = 0;
        } else {
            c[i] = 0;
            i += 1;
        }
    }
    for p in seen {
        rule.points.push(p);
        rule.weights.push(w);
    }
}

/// Gauss–Legendre on a segment (exact to degree 5).
pub fn segment() -> Rule {
    let s = (0.6f64).sqrt() / 2.0;
    Rule {
        points: vec![vec![0.5 - s, 0.5 + s], vec![0.5, 0.5], vec![0.5 + s, 0.5 - s]],
        weights: vec![5.0 / 18.0, 8.0 / 18.0, 5.0 / 18.0],
    }
}

/// Triangle rules exact for the given polynomial degree (2, 4, 5 or 6).
pub fn triangle(degree: usize) -> Rule {
    let mut r = Rule { points: Vec::new(), weights: Vec::new() };
    match degree {
        0..=2 => push_perms(&mut r, &[2.0 / 3.0, 1.0 / 6.0, 1.0 / 6.0], 1.0 / 3.0),
        3 | 4 => {
            let a = 0.445948490915965;
            push_perms(&mut r, &[a, a, 1.0 - 2.0 * a], 0.223381589678011);
            let b = 0.091576213509771;
            push_perms(&mut r, &[b, b, 1.0 - 2.0 * b], 0.109951743655322);
        }
        5 => {
            push_perms(&mut r, &[1.0 / 3.0; 3], 0.225);
            let a = 0.470142064105115;
            push_perms(&mut r, &[a, a, 1.0 - 2.0 * a], 0.132394152788506);
            let b = 0.101286507323456;
            push_perms(&mut r, &[b, b, 1.0 - 2.0 * b], 0.125939180544827);
        }
        _ => {
            let a = 0.249286745170910;
            push_perms(&mut r, &[a, a, 1.0 - 2.0 * a], 0.116786275726379);
            let b = 0.063089014491502;
            push_perms(&mut r, &[b, b, 1.0 - 2.0 * b], 0.050844906370207);
            push_perms(&mut r, &[0.053145049844817, 0.310352451033784, 0.636502499121399], 0.082851075618374);
        }
    }
    r.normalized()
}

/// Tetrahedron rules exact for degree 2 or 5.
pub fn tetrahedron(degree: usize) -> Rule {
    let mut r = Rule { points: Vec::new(), weights: Vec::new() };
    if degree <= 2 {
        let a = (5.0 - 5f64.sqrt()) / 20.0;
        push_perms(&mut r, &[1.0 - 3.0 * a, a, a, a], 0.25);
    } else {
        let a = 0.31088591926330060980;
        push_perms(&mut r, &[a, a, a, 1.0 - 3.0 * a], 0.11268792571801585080);
        let a = 0.09273525031089122640;
        push_perms(&mut r, &[a, a, a, 1.0 - 3.0 * a], 0.07349304311636194955);
        let b = 0.04550370412564964949;
        push_perms(&mut r, &[b, b, 0.5 - b, 0.5 - b], 0.04254602077708146644);
    }
    r.normalized()
}

/// Highest-order rule available on a `dim`-simplex.
pub fn simplex(dim: usize) -> Rule {
    match dim {
        1 => segment(),
        2 => triangle(6),
        _ => tetrahedron(5),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn factorial(n: u32) -> f64 {
        (1..=n).map(|k| k as f64).product()
    }

    /// Exact integral of prod l_k^{e_k} over the unit-measure simplex.
    fn exact(e: &[u32]) -> f64 {
        let d = e.len() as u32 - 1;
        let num: f64 = e.iter().map(|&k| factorial(k)).product();
        num * factorial(d) / factorial(e.iter().sum::<u32>() + d)
    }

    fn check(rule: &Rule, degree: u32, tol: f64) {
        let n = rule.points[0].len();
        let mut e = vec![0u32; n];
        loop {
            if e.iter().sum::<u32>() <= degree {
                let q: f64 = rule
                    .points
                    .iter()
                    .zip(&rule.weights)
                    .map(|(p, w)| w * p.iter().zip(&e).map(|(x, &k)| x.powi(k as i32)).product::<f64>())
                    .sum();
                assert!((q - exact(&e)).abs() < tol, "exponents {e:?}: {q} vs {}", exact(&e));
            }
            let mut k = 0;
            while k < n {
                e[k] += 1;
                if e[k] <= degree {
                    break;
                }
                e[k] = 0;
                k += 1;
            }
            if k == n {
                break;
            }
        }
    }

    #[test]
    fn point_counts() {
        assert_eq!(triangle(2).len(), 3);
        assert_eq!(triangle(4).len(), 6);
        assert_eq!(triangle(5).len(), 7);
        assert_eq!(triangle(6).len(), 12);
        assert_eq!(tetrahedron(2).len(), 4);
        assert_eq!(tetrahedron(5).len(), 14);
    }

    #[test]
    fn monomial_exactness() {
        check(&segment(), 5, 1e-15);
        check(&triangle(2), 2, 1e-15);
        check(&triangle(4), 4, 1e-12);
        check(&triangle(5), 5, 1e-12);
        check(&triangle(6), 6, 1e-12);
        check(&tetrahedron(2), 2, 1e-15);
        check(&tetrahedron(5), 5, 1e-15);
    }
}
