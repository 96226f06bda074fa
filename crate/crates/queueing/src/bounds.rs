//! Closed-form envelopes on the mean and worst-case wait.

use crate::params::ScenarioParams;

#[derive(Clone, Debug, PartialEq)]
pub struct Term {
    pub formula: &'static str,
    pub value: f64,
    /// Only the growth rate is known; the constant is taken as 1.
    pub big_o: bool,
}

#[derive(Clone, Debug, PartialEq)]
pub struct WaitBound {
    pub mean: Term,
    /// Whether the scenario satisfies the conditions the mean bound needs.
    pub valid: bool,
    /// Leading terms of the expected worst wait among `n` tokens, without
    /// their additive constants.
    pub worst_case: Vec<Term>,
}

fn ln_n(n: usize) -> f64 {
    (n.max(1) as f64).ln()
}

fn ln_ln_n(n: usize) -> f64 {
    ln_n(n).max(1.0).ln()
}

pub fn bound_wait(p: &ScenarioParams) -> WaitBound {
    let (a, b, c) = (p.alpha, p.b as f64, p.c as f64);
    let load = a * b;
    let in_range = a > 0.0 && a < 1.0;
    let single = Term {
        formula: "log n / (-b log alpha)",
        value: ln_n(p.n) / (-b * a.ln()),
        big_o: false,
    };
    match (p.c, p.rerandomize) {
        (1, true) => WaitBound {
            mean: Term {
                formula: "(e alpha)^-b",
                value: (std::f64::consts::E * a).powf(-b),
                big_o: false,
            },
            valid: in_range && std::f64::consts::E * a < 1.0,
            worst_case: vec![single],
        },
        (1, false) => {
            let x = (a * (1.0 - a).exp()).powf(b);
            WaitBound {
                mean: Term {
                    formula: "x / (1 - x), x = alpha^b e^((1-alpha) b)",
                    value: x / (1.0 - x),
                    big_o: false,
                },
                valid: in_range,
                worst_case: vec![
                    single,
                    Term {
                        formula: "O(log n)",
                        value: ln_n(p.n),
                        big_o: true,
                    },
                ],
            }
        }
        (_, true) => WaitBound {
            mean: Term {
                formula: "(alpha b)^(c^b)",
                value: load.powf(c.powf(b)),
                big_o: false,
            },
            valid: in_range && load < 1.0,
            worst_case: vec![Term {
                formula: "log n / (-c^b log(alpha b))",
                value: ln_n(p.n) / (-c.powf(b) * load.ln()),
                big_o: false,
            }],
        },
        (_, false) => WaitBound {
            mean: Term {
                formula: "O((alpha b)^(c^b - 1))",
                value: load.powf(c.powf(b) - 1.0),
                big_o: true,
            },
            valid: in_range && load < 1.0,
            // two readings of the leading term are in circulation; report both
            worst_case: vec![
                Term {
                    formula: "log log n / log c",
                    value: ln_ln_n(p.n) / c.ln(),
                    big_o: false,
                },
                Term {
                    formula: "log log n / (b log c)",
                    value: ln_ln_n(p.n) / (b * c.ln()),
                    big_o: false,
                },
            ],
        },
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn closed_forms() {
        let p = ScenarioParams::new(0.2, 2, 1, true, 1000);
        let w = bound_wait(&p);
        assert!(w.valid);
        assert!((w.mean.value - (std::f64::consts::E * 0.2).powi(-2)).abs() < 1e-12);

        let w = bound_wait(&ScenarioParams::new(0.2, 2, 2, true, 1000));
        assert!((w.mean.value - 0.0256).abs() < 1e-15);
        assert!(w.valid);

        let w = bound_wait(&ScenarioParams::new(0.2, 2, 2, false, 1000));
        assert!(w.mean.big_o);
        assert!((w.mean.value - 0.4f64.powi(3)).abs() < 1e-15);
        assert_eq!(w.worst_case.len(), 2);
        assert!((w.worst_case[0].value / w.worst_case[1].value - 2.0).abs() < 1e-12);
    }

    #[test]
    fn validity_flags() {
        assert!(!bound_wait(&ScenarioParams::new(0.4, 2, 1, true, 10)).valid);
        assert!(!bound_wait(&ScenarioParams::new(5.0 / 12.0, 3, 2, true, 10)).valid);
        assert!(bound_wait(&ScenarioParams::new(5.0 / 12.0, 3, 1, false, 10)).valid);
        assert!(!bound_wait(&ScenarioParams::new(1.5, 3, 1, false, 10)).valid);
    }

    #[test]
    fn single_token_has_no_worst_case_growth() {
        for c in [1, 2] {
            for r in [true, false] {
                let w = bound_wait(&ScenarioParams::new(0.3, 2, c, r, 1));
                assert!(w.worst_case.iter().all(|t| t.value == 0.0));
            }
        }
    }
}
