//! Small games for exhaustive kernel checks.

use std::sync::Arc;

use rationalizer_core::epistemic::{standard_models, SubjectiveModel, TypeSpec, TypeStructure};
use rationalizer_core::game::{ExtensiveForm, TreeSpec};
use rationalizer_core::payoff::StandardPayoffStructure;
use rationalizer_core::rational::{int, ratio, Rational};

pub struct MicroCase {
    pub name: String,
    pub form: Arc<ExtensiveForm>,
    pub models: Vec<SubjectiveModel>,
}

fn t(label: &str) -> TreeSpec {
    TreeSpec::terminal(label)
}

fn shapes() -> Vec<(&'static str, TreeSpec)> {
    let two = |p, a: &str, b: &str, x, y| TreeSpec::single(p, vec![(a, x), (b, y)]);
    vec![
        (
            "centipede",
            two(0, "D", "A", t("D"), two(1, "d", "a", t("Ad"), two(0, "D2", "A2", t("AaD2"), t("AaA2")))),
        ),
        ("observe", two(1, "l", "r", two(0, "a", "b", t("la"), t("lb")), two(0, "c", "d", t("rc"), t("rd")))),
        ("respond", two(0, "A", "B", two(1, "x", "y", t("Ax"), t("Ay")), two(1, "u", "v", t("Bu"), t("Bv")))),
        (
            "simultaneous",
            TreeSpec::Decision {
                moves: vec![(0, vec!["T".into(), "B".into()]), (1, vec!["L".into(), "R".into()])],
                children: vec![
                    (vec!["T".into(), "L".into()], two(0, "x", "y", t("TLx"), t("TLy"))),
                    (vec!["T".into(), "R".into()], t("TR")),
                    (vec!["B".into(), "L".into()], t("BL")),
                    (vec!["B".into(), "R".into()], two(1, "m", "n", t("BRm"), t("BRn"))),
                ],
            },
        ),
        (
            "three_way",
            TreeSpec::single(
                0,
                vec![
                    ("A", two(1, "l", "r", two(0, "x", "y", t("Alx"), t("Aly")), t("Ar"))),
                    ("B", two(1, "m", "n", t("Bm"), t("Bn"))),
                    ("C", t("C")),
                ],
            ),
        ),
    ]
}

/// Deterministic small integers in `-3..=3`.
fn payoff(seed: usize, p: usize, z: usize, state: usize) -> Rational {
    let h = (seed * 31 + p * 17 + z * 7 + state * 13 + (z * state + seed * p) * 5) % 7;
    int(h as i64 - 3)
}

/// Beliefs over `(nature, opponent type)` pairs.
fn beliefs(config: usize, natures: usize, types: usize) -> Vec<(usize, usize, Rational)> {
    let last_n = natures - 1;
    let last_t = types - 1;
    match config {
        0 => vec![(0, 0, int(1))],
        1 if (last_n, last_t) != (0, 0) => vec![(0, 0, ratio(1, 3)), (last_n, last_t, ratio(2, 3))],
        _ => vec![(last_n, 0, ratio(1, 2)), (0, last_t, ratio(1, 2))]
            .into_iter()
            .fold(Vec::new(), |mut acc: Vec<(usize, usize, Rational)>, (n, t, p)| {
                match acc.iter_mut().find(|(a, b, _)| (*a, *b) == (n, t)) {
                    Some(e) => e.2 += p,
                    None => acc.push((n, t, p)),
                }
                acc
            }),
    }
}

/// Every shape, with one or two nature states, one or two payoff types for the opponent of the
/// root player, two payoff seeds and three belief patterns.
pub fn micro_cases() -> Vec<MicroCase> {
    let mut out = Vec::new();
    for (shape, tree) in shapes() {
        let form = Arc::new(ExtensiveForm::new(vec!["P1".into(), "P2".into()], &tree).unwrap());
        assert!(form.validate().is_empty(), "{shape}: {:?}", form.validate());
        for natures in 1..=2 {
            for types in 1..=2 {
                for seed in 0..2 {
                    let nature: Vec<String> = (0..natures).map(|k| format!("w{k}")).collect();
                    let labels: Vec<Vec<String>> =
                        (0..2).map(|p| (0..types).map(|k| format!("p{p}_{k}")).collect()).collect();
                    let ups = StandardPayoffStructure::from_fn(
                        &format!("{shape}/{natures}/{types}/{seed}"),
                        nature.clone(),
                        labels.clone(),
                        form.num_terminals(),
                        |p, z, st| {
                            let idx = (st.nature * types + st.types[0]) * types + st.types[1];
                            payoff(seed, p, z, idx)
                        },
                    )
                    .unwrap();
                    let ups = Arc::new(ups);
                    for config in 0..3 {
                        // Type `k` of each player carries payoff type `k`; both types share a belief pattern.
                        let mut specs = Vec::new();
                        for p in 0..2 {
                            for k in 0..types {
                                let belief = beliefs(config, natures, types)
                                    .into_iter()
                                    .map(|(n, t, pr)| (nature[n].clone(), vec![format!("t{}_{t}", 1 - p)], pr))
                                    .collect();
                                specs.push(TypeSpec {
                                    label: format!("t{p}_{k}"),
                                    player: p,
                                    payoff_type: labels[p][k].clone(),
                                    belief,
                                });
                            }
                        }
                        let ts = Arc::new(TypeStructure::new(2, specs).unwrap());
                        let models = standard_models(ups.clone(), ts, &["t0_0", "t1_0"]).unwrap();
                        out.push(MicroCase {
                            name: format!("{shape} natures={natures} types={types} seed={seed} belief={config}"),
                            form: form.clone(),
                            models,
                        });
                    }
                }
            }
        }
    }
    out
}
