//! Simplex results against brute-force vertex enumeration on small random
//! LPs of the form `max c·x, A x ≤ b, 0 ≤ x ≤ 10`.

use drsafe::lp::{LinearProgram, LpStatus, RowSense, Sense};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const BOX: f64 = 10.0;

struct Instance {
    c: Vec<f64>,
    a: Vec<Vec<f64>>,
    b: Vec<f64>,
}

fn random_instance(rng: &mut impl Rng) -> Instance {
    let n = rng.random_range(1..=3);
    let m = rng.random_range(1..=4);
    let int = |rng: &mut ChaCha8Rng, lo: i32, hi: i32| rng.random_range(lo..=hi) as f64;
    let mut r = ChaCha8Rng::seed_from_u64(rng.random());
    Instance {
        c: (0..n).map(|_| int(&mut r, -5, 5)).collect(),
        a: (0..m).map(|_| (0..n).map(|_| int(&mut r, -4, 4)).collect()).collect(),
        b: (0..m).map(|_| int(&mut r, -6, 12)).collect(),
    }
}

/// All half-spaces `g·x ≤ h`, including the bounds.
fn halfspaces(inst: &Instance) -> Vec<(Vec<f64>, f64)> {
    let n = inst.c.len();
    let mut out: Vec<(Vec<f64>, f64)> = inst.a.iter().cloned().zip(inst.b.iter().copied()).collect();
    for i in 0..n {
        let mut e = vec![0.0; n];
        e[i] = -1.0;
        out.push((e.clone(), 0.0));
        e[i] = 1.0;
        out.push((e, BOX));
    }
    out
}

fn solve_square(mut a: Vec<Vec<f64>>, mut b: Vec<f64>) -> Option<Vec<f64>> {
    let n = b.len();
    for col in 0..n {
        let p = (col..n).max_by(|&i, &j| a[i][col].abs().total_cmp(&a[j][col].abs()))?;
        if a[p][col].abs() < 1e-12 {
            return None;
        }
        a.swap(col, p);
        b.swap(col, p);
        for r in 0..n {
            if r != col {
                let f = a[r][col] / a[col][col];
                for k in 0..n {
                    a[r][k] -= f * a[col][k];
                }
                b[r] -= f * b[col];
            }
        }
    }
    Some((0..n).map(|i| b[i] / a[i][i]).collect())
}

fn combinations(k: usize, n: usize) -> Vec<Vec<usize>> {
    if k == 0 {
        return vec![vec![]];
    }
    (k - 1..n)
        .flat_map(|last| {
            combinations(k - 1, last).into_iter().map(move |mut c| {
                c.push(last);
                c
            })
        })
        .collect()
}

/// Best objective over feasible vertices, `None` if there are none.
fn vertex_optimum(inst: &Instance) -> Option<f64> {
    let n = inst.c.len();
    let hs = halfspaces(inst);
    combinations(n, hs.len())
        .into_iter()
        .filter_map(|idx| {
            let a = idx.iter().map(|&i| hs[i].0.clone()).collect();
            let b = idx.iter().map(|&i| hs[i].1).collect();
            solve_square(a, b)
        })
        .filter(|x| {
            hs.iter()
                .all(|(g, h)| g.iter().zip(x).map(|(g, x)| g * x).sum::<f64>() <= h + 1e-9)
        })
        .map(|x| inst.c.iter().zip(&x).map(|(c, x)| c * x).sum::<f64>())
        .max_by(f64::total_cmp)
}

#[test]
fn simplex_matches_vertex_enumeration() {
    let mut rng = ChaCha8Rng::seed_from_u64(20);
    let (mut optimal, mut infeasible) = (0, 0);
    for case in 0..1500 {
        let inst = random_instance(&mut rng);
        let n = inst.c.len();
        let mut lp = LinearProgram::new(Sense::Maximize, inst.c.clone());
        for (row, &rhs) in inst.a.iter().zip(&inst.b) {
            lp.add_constraint(row.clone(), RowSense::Le, rhs);
        }
        for i in 0..n {
            lp.set_bounds(i, 0.0, BOX);
        }
        let sol = lp.solve().unwrap();
        match vertex_optimum(&inst) {
            Some(best) => {
                optimal += 1;
                assert_eq!(sol.status, LpStatus::Optimal, "case {case}");
                assert!((sol.objective - best).abs() < 1e-7, "case {case}: {} vs {best}", sol.objective);
                let cert = lp.certify(&sol);
                assert!(cert.primal_residual < 1e-7, "case {case}: {cert:?}");
                assert!(cert.dual_sign_violation < 1e-7, "case {case}: {cert:?}");
                assert!(cert.duality_gap < 1e-6, "case {case}: {cert:?}");
            }
            None => {
                infeasible += 1;
                assert_eq!(sol.status, LpStatus::Infeasible, "case {case}");
            }
        }
    }
    assert!(optimal >= 1000, "only {optimal} feasible cases");
    assert!(infeasible > 0);
}

#[test]
fn minimize_with_mirrored_rows() {
    // same polytope, each row also given as a `≥` on its negation
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    for case in 0..300 {
        let inst = random_instance(&mut rng);
        let n = inst.c.len();
        let mut lp = LinearProgram::new(Sense::Minimize, inst.c.iter().map(|c| -c).collect());
        for (row, &rhs) in inst.a.iter().zip(&inst.b) {
            lp.add_constraint(row.clone(), RowSense::Le, rhs);
            lp.add_constraint(row.iter().map(|a| -a).collect(), RowSense::Ge, -rhs);
        }
        for i in 0..n {
            lp.set_bounds(i, 0.0, BOX);
        }
        let sol = lp.solve().unwrap();
        match vertex_optimum(&inst) {
            Some(best) => assert!((-sol.objective - best).abs() < 1e-7, "case {case}"),
            None => assert_eq!(sol.status, LpStatus::Infeasible, "case {case}"),
        }
    }
}

#[test]
fn unbounded_without_box() {
    let mut lp = LinearProgram::new(Sense::Maximize, vec![1.0, 1.0]);
    lp.add_constraint(vec![1.0, -1.0], RowSense::Le, 1.0);
    assert_eq!(lp.solve().unwrap().status, LpStatus::Unbounded);
}
