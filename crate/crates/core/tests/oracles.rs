//! Frozen reference values and brute-force cross-checks.
//!
//! Frozen numbers were computed with mpmath at 40 significant digits.

use std::collections::BTreeSet;

use ndarray::array;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use seqtod::corpus::{DomainGoal, Goal};
use seqtod::database::EntityRow;
use seqtod::evaluator::{bleu, inform_success, joint_goal_accuracy, DialogueOutcome, ResponseOutcome};
use seqtod::model::{nll_loss, positional_encoding};
use seqtod::schema::BeliefState;

#[test]
fn positional_encoding_position_one() {
    let pe = positional_encoding(2, 4).unwrap();
    let frozen = [
        0.841_470_984_807_896_5,
        0.540_302_305_868_139_7,
        0.009_999_833_334_166_665,
        0.999_950_000_416_665_3,
    ];
    for (i, f) in frozen.iter().enumerate() {
        assert!((pe[[1, i]] - f).abs() < 1e-15, "column {i}");
    }
}

#[test]
fn three_token_negative_log_likelihood() {
    let logits = array![[0.5, -1.25, 2.0, 0.0], [1.5, 1.5, -0.75, 0.25], [-2.0, 0.1, 0.3, 3.0]];
    let loss = nll_loss(&logits, &[2, 0, 1]).unwrap();
    assert!((loss - 1.409_297_031_590_297).abs() < 1e-12, "{loss}");
}

/// Candidates and references:
///
/// ```text
/// c1 the cat sat on the mat .               r1 the cat is on the mat .
/// c2 there is a train at [value_time] .     r2 there is a train leaving at [value_time] today .
/// ```
///
/// Clipped matches over candidate n-grams:
///
/// ```text
/// n=1  c1 6/7 (all but "sat")       c2 7/7            13/14
/// n=2  c1 4/6 (the cat, on the,     c2 4/6 (there is, is a,
///      the mat, mat .)                 a train, at [value_time])   8/12
/// n=3  c1 2/5 (on the mat,          c2 2/5 (there is a,
///      the mat .)                      is a train)                 4/10
/// n=4  c1 1/4 (on the mat .)        c2 1/4 (there is a train)      2/8
/// ```
///
/// Lengths c = 14, r = 16, so BP = exp(1 - 16/14) = exp(-1/7) and
/// BLEU = 100 exp(-1/7) (13/14 * 8/12 * 4/10 * 2/8)^(1/4) = 43.24032460588564.
#[test]
fn two_sentence_bleu_fixture() {
    let c = vec!["the cat sat on the mat .".to_string(), "there is a train at [value_time] .".to_string()];
    let r = vec![
        "the cat is on the mat .".to_string(),
        "there is a train leaving at [value_time] today .".to_string(),
    ];
    let hand: f64 = 100.0 * (-1.0f64 / 7.0).exp() * (13.0 / 14.0 * 8.0 / 12.0 * 4.0 / 10.0 * 2.0 / 8.0f64).powf(0.25);
    let value = bleu(&c, &r).unwrap();
    assert!((value - 43.240_324_605_885_64).abs() < 1e-9, "{value}");
    assert!((value - hand).abs() < 1e-9);
}

fn random_belief(rng: &mut ChaCha8Rng) -> BeliefState {
    let mut b = BeliefState::new();
    for _ in 0..rng.gen_range(0..5) {
        let d = ["hotel", "train"][rng.gen_range(0..2)];
        let s = ["area", "day", "stars", "book people"][rng.gen_range(0..4)];
        let v = ["north", "monday", "4", "2", "east"][rng.gen_range(0..5)];
        b.insert(d, s, v);
    }
    b
}

fn perturb(b: &BeliefState, rng: &mut ChaCha8Rng) -> BeliefState {
    let mut t = b.triplets();
    match rng.gen_range(0..4) {
        0 => {}
        1 if !t.is_empty() => {
            let i = rng.gen_range(0..t.len());
            t.remove(i);
        }
        2 if !t.is_empty() => {
            let i = rng.gen_range(0..t.len());
            t[i].value = "cheap".into();
        }
        _ => t.push(seqtod::schema::BeliefTriplet::new("train", "leaveat", "09:15")),
    }
    t.into_iter().collect()
}

#[test]
fn joint_accuracy_matches_set_comparison() {
    let mut rng = ChaCha8Rng::seed_from_u64(500);
    for _ in 0..500 {
        let n = rng.gen_range(1..8);
        let gold: Vec<BeliefState> = (0..n).map(|_| random_belief(&mut rng)).collect();
        let pred: Vec<BeliefState> = gold.iter().map(|g| perturb(g, &mut rng)).collect();
        let brute = gold
            .iter()
            .zip(&pred)
            .filter(|(g, p)| {
                let a: BTreeSet<(String, String, String)> =
                    g.iter().map(|(d, s, v)| (d.into(), s.into(), v.into())).collect();
                let b: BTreeSet<(String, String, String)> =
                    p.iter().map(|(d, s, v)| (d.into(), s.into(), v.into())).collect();
                a == b
            })
            .count() as f64
            / n as f64;
        assert_eq!(joint_goal_accuracy(&pred, &gold).unwrap(), brute);
    }
}

fn entity(rng: &mut ChaCha8Rng, domain: &str) -> EntityRow {
    let mut attributes = std::collections::BTreeMap::new();
    attributes.insert("area".to_string(), ["north", "south"][rng.gen_range(0..2)].to_string());
    attributes.insert("stars".to_string(), ["3", "4"][rng.gen_range(0..2)].to_string());
    attributes.insert("phone".to_string(), format!("0122{}", rng.gen_range(100..110)));
    attributes.insert("postcode".to_string(), format!("cb{} {}", rng.gen_range(1..4), rng.gen_range(1..4)));
    EntityRow {
        domain: domain.to_string(),
        attributes,
    }
}

/// Scans every response for every requested value, token by token.
fn brute_force(dialogues: &[DialogueOutcome]) -> (f64, f64) {
    let (mut total, mut inf, mut suc) = (0.0, 0.0, 0.0);
    for d in dialogues {
        for (domain, g) in &d.goal.domains {
            total += 1.0;
            let mut last = None;
            for r in &d.responses {
                if let Some(e) = &r.offered {
                    if &e.domain == domain {
                        last = Some(e);
                    }
                }
            }
            let Some(e) = last else { continue };
            if !g.info.iter().all(|(k, v)| e.attributes.get(k) == Some(v)) {
                continue;
            }
            inf += 1.0;
            let mut all = true;
            for slot in &g.reqt {
                let want: Vec<&str> = e.attributes[slot].split(' ').collect();
                let mut found = false;
                for r in &d.responses {
                    let words: Vec<&str> = r.text.split(' ').collect();
                    for start in 0..words.len() {
                        if words.len() - start >= want.len() && words[start..start + want.len()] == want[..] {
                            found = true;
                        }
                    }
                }
                all &= found;
            }
            if all {
                suc += 1.0;
            }
        }
    }
    if total == 0.0 {
        (0.0, 0.0)
    } else {
        (100.0 * inf / total, 100.0 * suc / total)
    }
}

#[test]
fn inform_success_matches_exhaustive_scan() {
    let mut rng = ChaCha8Rng::seed_from_u64(200);
    for case in 0..200 {
        let dialogues: Vec<DialogueOutcome> = (0..rng.gen_range(1..5))
            .map(|i| {
                let mut goal = Goal::default();
                for domain in ["hotel", "train"] {
                    if rng.gen_bool(0.6) {
                        let target = entity(&mut rng, domain);
                        let mut info = std::collections::BTreeMap::new();
                        info.insert("area".to_string(), target.attributes["area"].clone());
                        let k = rng.gen_range(0..3);
                        let reqt: Vec<String> = ["phone", "postcode"]
                            .choose_multiple(&mut rng, k)
                            .map(|s| s.to_string())
                            .collect();
                        goal.domains.insert(
                            domain.to_string(),
                            DomainGoal {
                                info,
                                book: Default::default(),
                                reqt,
                            },
                        );
                    }
                }
                let responses = (0..rng.gen_range(0..6))
                    .map(|_| {
                        let domain = ["hotel", "train"][rng.gen_range(0..2)];
                        let offered = rng.gen_bool(0.5).then(|| entity(&mut rng, domain));
                        let text = match (&offered, rng.gen_range(0..3)) {
                            (Some(e), 0) => format!("the phone is {} .", e.attributes["phone"]),
                            (Some(e), 1) => format!("postcode {} and phone {}", e.attributes["postcode"], e.attributes["phone"]),
                            _ => format!("the postcode is cb{} {} .", rng.gen_range(1..4), rng.gen_range(1..4)),
                        };
                        ResponseOutcome { text, offered }
                    })
                    .collect();
                DialogueOutcome {
                    id: format!("{case}-{i}"),
                    goal,
                    responses,
                }
            })
            .collect();
        let fast = inform_success(&dialogues);
        let (inf, suc) = brute_force(&dialogues);
        assert!((fast.inform - inf).abs() < 1e-9 && (fast.success - suc).abs() < 1e-9, "case {case}");
        assert!(fast.success <= fast.inform);
    }
}

#[test]
fn bleu_is_order_invariant_and_self_perfect() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let words = ["a", "b", "c", "d", ".", "[value_time]"];
    for _ in 0..100 {
        let n = rng.gen_range(1..6);
        let sent = |rng: &mut ChaCha8Rng| {
            (0..rng.gen_range(0..9))
                .map(|_| *words.choose(rng).unwrap())
                .collect::<Vec<_>>()
                .join(" ")
        };
        let c: Vec<String> = (0..n).map(|_| sent(&mut rng)).collect();
        let r: Vec<String> = (0..n).map(|_| sent(&mut rng)).collect();
        assert_eq!(bleu(&c, &c).unwrap(), 100.0);
        let mut idx: Vec<usize> = (0..n).collect();
        idx.shuffle(&mut rng);
        let cs: Vec<String> = idx.iter().map(|&i| c[i].clone()).collect();
        let rs: Vec<String> = idx.iter().map(|&i| r[i].clone()).collect();
        let (a, b) = (bleu(&c, &r).unwrap(), bleu(&cs, &rs).unwrap());
        assert!((a - b).abs() < 1e-12);
        assert!((0.0..=100.0).contains(&a));
    }
}

#[test]
fn joint_accuracy_ignores_triplet_order() {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    for _ in 0..100 {
        let b = random_belief(&mut rng);
        let mut t = b.triplets();
        t.shuffle(&mut rng);
        let shuffled: BeliefState = t.into_iter().collect();
        assert_eq!(joint_goal_accuracy(&[shuffled], &[b]).unwrap(), 1.0);
    }
}
