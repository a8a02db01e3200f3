use super::*;
use crate::error::AbortReason;
use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;

fn spec(role: Role, behavior: Behavior, defense: DefenseMode) -> AttackSpec {
    AttackSpec::new(role, behavior, defense, 16)
}

fn run(spec: &AttackSpec, trials: usize, seed: u64) -> (AttackReport, Vec<TrialOutcome>) {
    run_trials(spec, trials, seed, Execution::Parallel).unwrap()
}

fn only_check(report: &AttackReport, check: CheckId) {
    assert_eq!(report.detected, report.trials, "{}: {report:?}", report.spec.behavior.name());
    assert_eq!(report.by_check.get(check.name()), Some(&report.trials), "{report:?}");
}

#[test]
fn honest_runs_never_abort() {
    let mut rng = ChaCha12Rng::seed_from_u64(3);
    for i in 0..250 {
        let defense = if rng.random_bool(0.5) { DefenseMode::Full } else { DefenseMode::PostShuffleOnly };
        let role = Role::SERVERS[i % 3];
        let s = AttackSpec::new(role, Behavior::Honest, defense, rng.random_range(2..40));
        let task = trial_task(&s, i as u64);
        let out = run_trial(&s, &task, rng.random(), i as u64).unwrap();
        assert!(!out.detected(), "{s:?}: {:?}", out.abort);
    }
}

#[test]
fn selective_failure_caught_in_shuffle_under_full_defense() {
    let (r, _) = run(&spec(Role::S2, Behavior::SelectiveFailure(Target::Z2), DefenseMode::Full), 300, 1);
    only_check(&r, CheckId::Z2);
    let (r, _) = run(&spec(Role::S1, Behavior::SelectiveFailure(Target::Z1), DefenseMode::Full), 300, 2);
    only_check(&r, CheckId::Z1);
}

#[test]
fn oracle_guess_escapes_without_in_shuffle_checks() {
    for (role, target) in [(Role::S2, Target::Z2), (Role::S1, Target::Z1)] {
        let mut s = spec(role, Behavior::SelectiveFailure(target), DefenseMode::PostShuffleOnly);
        s.guess = Guess::Oracle;
        let (r, outcomes) = run(&s, 100, 4);
        assert_eq!(r.detected, 0, "{r:?}");
        assert!(outcomes.iter().all(|o| Some(o.p) == o.target));
        s.defense = DefenseMode::Full;
        assert_eq!(run(&s, 100, 4).0.escapes(), 0);
    }
}

#[test]
fn escapes_are_exactly_the_correct_guesses() {
    for (role, target) in [(Role::S2, Target::Z2), (Role::S1, Target::Z1)] {
        for n in [8, 16, 64] {
            let mut s = spec(role, Behavior::SelectiveFailure(target), DefenseMode::PostShuffleOnly);
            s.rows = n;
            let trials = 2000;
            let (r, outcomes) = run(&s, trials, 10 + n as u64);
            for o in &outcomes {
                assert_eq!(o.detected(), Some(o.p) != o.target, "{o:?}");
            }
            let expected = trials as f64 / n as f64;
            let sigma = (expected * (1.0 - 1.0 / n as f64)).sqrt();
            let esc = r.escapes() as f64;
            assert!((esc - expected).abs() <= 3.0 * sigma, "N = {n}: {esc} escapes, expected {expected} ± {sigma}");
            assert!(r.by_check.keys().all(|k| *k == CheckId::PostShuffle.name()));
        }
    }
}

#[test]
fn fixed_guess_on_fixed_row() {
    let mut s = spec(Role::S2, Behavior::SelectiveFailure(Target::Z2), DefenseMode::PostShuffleOnly);
    s.q = Some(3);
    s.guess = Guess::Fixed(5);
    let (_, outcomes) = run(&s, 50, 6);
    assert!(outcomes.iter().all(|o| o.q == 3 && o.p == 5));
}

#[test]
fn forgery_blocked_by_commitments() {
    for role in [Role::S1, Role::S2, Role::S3] {
        let s = spec(role, Behavior::ForgeFShare, DefenseMode::Full);
        let (r, outcomes) = run(&s, 100, 7);
        assert_eq!(r.detected, r.trials);
        assert!(outcomes.iter().all(|o| o.abort.unwrap().reason == AbortReason::CommitMismatch), "{role}");
    }
}

#[test]
fn forgery_succeeds_without_commitments() {
    for role in [Role::S1, Role::S2, Role::S3] {
        let mut s = spec(role, Behavior::ForgeFShare, DefenseMode::Full);
        s.commit = false;
        let (r, _) = run(&s, 100, 8);
        assert_eq!(r.detected, 0, "{role}: {r:?}");
    }
}

#[test]
fn bit_flips_in_share_blocks_always_abort() {
    for (after_commit, check) in [(false, CheckId::EntryMac), (true, CheckId::ShareReveal)] {
        for role in [Role::S1, Role::S2] {
            let mut s = spec(role, Behavior::TamperReconstruction, DefenseMode::Full);
            s.after_commit = after_commit;
            let (r, _) = run(&s, 500, 9);
            only_check(&r, check);
        }
    }
}

#[test]
fn model_perturbation_caught_by_hash_exchange() {
    for role in [Role::S1, Role::S2] {
        let s = spec(role, Behavior::TamperAggregation, DefenseMode::Full);
        only_check(&run(&s, 100, 10).0, CheckId::ModelHash);
        let mut s = s;
        s.perturb = 0.0;
        assert_eq!(run(&s, 20, 10).0.detected, 0);
    }
}

#[test]
fn malformed_delta_caught_after_shuffle() {
    let (r, _) = run(&spec(Role::S3, Behavior::MalformedDelta, DefenseMode::Full), 300, 11);
    only_check(&r, CheckId::PostShuffle);
}

#[test]
fn malformed_triples_abort_the_dealt_check() {
    for (dealer, check) in [(Role::S3, CheckId::PostShuffle), (Role::S1, CheckId::Z1)] {
        let (r, _) = run(&spec(dealer, Behavior::MalformedTriples, DefenseMode::Full), 200, 12);
        assert_eq!(r.detected, r.trials);
        // A dealer deals for several checks; the first one reached fires.
        assert!(r.by_check.contains_key(check.name()) || dealer == Role::S3, "{r:?}");
    }
    // S2 deals for check_z2, which runs first.
    let (r, _) = run(&spec(Role::S2, Behavior::MalformedTriples, DefenseMode::Full), 200, 12);
    only_check(&r, CheckId::Z2);
}

#[test]
fn trials_are_deterministic_across_execution_modes() {
    let s = spec(Role::S2, Behavior::SelectiveFailure(Target::Z2), DefenseMode::PostShuffleOnly);
    let a = run_trials(&s, 64, 13, Execution::Parallel).unwrap().1;
    let b = run_trials(&s, 64, 13, Execution::Sequential).unwrap().1;
    assert_eq!(a, b);
}

#[test]
fn rejects_impossible_specs() {
    assert!(spec(Role::S3, Behavior::SelectiveFailure(Target::Z2), DefenseMode::Full).validate().is_err());
    assert!(spec(Role::S1, Behavior::MalformedDelta, DefenseMode::Full).validate().is_err());
    assert!(spec(Role::S3, Behavior::ForgeFShare, DefenseMode::PostShuffleOnly).validate().is_err());
    let mut s = spec(Role::S2, Behavior::SelectiveFailure(Target::Z2), DefenseMode::Full);
    s.q = Some(16);
    assert!(s.validate().is_err());
    s.q = None;
    s.guess = Guess::Fixed(99);
    assert!(s.validate().is_err());
    s.guess = Guess::Random;
    s.delta = Some(0);
    assert!(s.validate().is_err());
}

#[test]
fn behavior_names_round_trip() {
    for b in Behavior::ALL {
        assert_eq!(Behavior::parse(b.name()), Some(b));
    }
    assert_eq!(Behavior::parse("forge-f-share"), Some(Behavior::ForgeFShare));
    assert_eq!(Behavior::parse("nope"), None);
}

#[test]
fn scenario_file_parses() {
    let text = r#"
[[attack]]
role = "S2"
behavior = "selective_failure_z2"
defense = "post_shuffle_only"
trials = 10
q = 2
p = 7

[[attack]]
role = "s1"
behavior = "forge_f_share"
commit = false
p = "random"
"#;
    let sc = parse_scenarios(text).unwrap();
    assert_eq!(sc.len(), 2);
    assert_eq!(sc[0].spec.guess, Guess::Fixed(7));
    assert_eq!(sc[0].spec.q, Some(2));
    assert_eq!(sc[0].trials, 10);
    assert_eq!(sc[1].spec.role, Role::S1);
    assert!(!sc[1].spec.commit);
    assert_eq!(sc[1].trials, 1000);
    assert!(matches!(parse_scenarios("[[attack]]\nrole = \"S9\"\nbehavior = \"honest\"\n"), Err(Error::Usage(_))));
    assert!(matches!(parse_scenarios("[[attack]]\nrole = \"S1\"\nbehavior = \"honest\"\nextra = 1\n"), Err(Error::Usage(_))));
}

#[test]
fn csv_has_one_row_per_report() {
    let (r, _) = run(&spec(Role::S3, Behavior::MalformedDelta, DefenseMode::Full), 10, 14);
    let csv = reports_to_csv(&[r.clone(), r]).unwrap();
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines[0], "behavior,trials,detected,escape_rate,role,defense,checks");
    assert_eq!(lines[1], "malformed_delta,10,10,0.000000,S3,full,post_shuffle:10");
    assert_eq!(lines.len(), 3);
}

#[test]
fn named_scenarios_cover_the_matrix() {
    let m = attack_matrix(DefenseMode::Full, 16);
    assert_eq!(m.len(), 2 + 3 + 4 + 2 + 1 + 3);
    assert!(m.iter().all(|s| s.validate().is_ok() && s.behavior != Behavior::Honest));
    assert_eq!(attack_matrix(DefenseMode::PostShuffleOnly, 16).len(), m.len() - 1);
    for name in SCENARIO_NAMES {
        assert!(named_specs(name, DefenseMode::Full, 16).is_some(), "{name}");
    }
    assert!(named_specs("selective_failure", DefenseMode::Full, 16).is_some());
    assert!(named_specs("bogus", DefenseMode::Full, 16).is_none());
}
