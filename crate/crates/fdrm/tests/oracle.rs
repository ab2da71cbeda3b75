use fdrm::oracle::{
    brute_force_pareto_oracle, brute_force_pareto_oracle_with, check_pareto, donation, ordered_subsets,
    random_instance, requirement, strategyproof_probe, table_five_instance, verify_gamma_bound, Certificate,
    OracleError, SmallInstance,
};
use fdrm_core::{DeliveryRecord, FoodType, Location, RequestId, Route, Thresholds};

fn rid(agent: u64) -> RequestId {
    RequestId::new(agent, 1)
}

#[test]
fn table_five_picks_q_and_is_undominated() {
    let rep = brute_force_pareto_oracle(&table_five_instance()).unwrap();
    assert!(rep.selections.contains(&(rid(2), rid(20))));
    assert_eq!(rep.selections[0], (rid(2), rid(20)));
    assert_eq!(rep.certificate, Certificate::ParetoOk);
}

#[test]
fn swapping_p_in_for_q_is_dominated() {
    let rep = brute_force_pareto_oracle_with(&table_five_instance(), |t, mut a| {
        let p = t.donors.iter().position(|d| *d == rid(1)).unwrap();
        let q = t.donors.iter().position(|d| *d == rid(2)).unwrap();
        a.swap(p, q);
        a
    })
    .unwrap();
    assert!(!rep.certificate.is_ok());
}

#[test]
fn empty_instance_is_trivially_ok() {
    let rep = brute_force_pareto_oracle(&SmallInstance::empty(500)).unwrap();
    assert!(rep.selections.is_empty());
    assert!(rep.certificate.is_ok());
}

#[test]
fn oversized_instances_are_refused() {
    let mut inst = SmallInstance::empty(500);
    inst.donors = (1..=6).map(|a| donation(a, Location::new(0.0, 0.0), FoodType::FreshlyCooked, 1000, (600, 700))).collect();
    assert!(matches!(brute_force_pareto_oracle(&inst), Err(OracleError::TooLarge { donors: 6, .. })));
    inst.donors.truncate(5);
    assert!(matches!(strategyproof_probe(&inst), Err(OracleError::TooLarge { .. })));
}

#[test]
fn instance_files_round_trip() {
    let inst = table_five_instance();
    let text = serde_json::to_string(&inst).unwrap();
    assert_eq!(serde_json::from_str::<SmallInstance>(&text).unwrap(), inst);
}

#[test]
fn pareto_check_accepts_a_lone_best_choice() {
    let inst = table_five_instance();
    let t = &inst.run().unwrap()[0];
    let produced = fdrm::oracle::produced_assignment(t);
    assert!(check_pareto(t, &produced).is_ok());
}

#[test]
fn ordered_subsets_of_four() {
    let s = ordered_subsets(&[1, 2, 3, 4]);
    assert_eq!(s.len(), 1 + 4 + 12 + 24 + 24);
    assert!(s.contains(&vec![]) && s.contains(&vec![4, 2]));
}

/// Receiver 12 closes first and would take donor 1, which prefers 11.
/// Listing 12 last lets donor 2, which arrived first, take 12 on arrival
/// order and leaves 11 for donor 1.
fn demotion_instance() -> SmallInstance {
    let at = Location::new(0.0, 0.0);
    let food = FoodType::FreshlyCooked;
    let mut e = donation(2, at, food, 1000, (600, 700));
    e.preferred_receivers = vec![13, 11, 12];
    let mut d = donation(1, at, food, 1000, (600, 700));
    d.preferred_receivers = vec![11, 12];
    let receivers = vec![
        requirement(11, at, food, 1000, (620, 800)),
        requirement(12, at, food, 1000, (620, 720)),
        requirement(13, at, food, 1000, (620, 840)),
    ];
    SmallInstance { donors: vec![e, d], receivers, ..SmallInstance::empty(540) }
}

#[test]
fn demoting_a_receiver_can_pay_off() {
    let inst = demotion_instance();
    let truthful = brute_force_pareto_oracle(&inst).unwrap();
    assert!(truthful.selections.contains(&(rid(1), rid(12))));

    let mut lie = inst.clone();
    lie.donors[1].preferred_receivers = vec![11, 13, 12];
    let manipulated = brute_force_pareto_oracle(&lie).unwrap();
    assert!(manipulated.selections.contains(&(rid(1), rid(11))));

    let probe = strategyproof_probe(&inst).unwrap();
    assert!(probe.violations.iter().any(|v| v.agent == 1 && v.manipulated_rank == 1 && v.truthful_rank == 2));
}

#[test]
fn random_instances_are_deterministic_and_in_bounds() {
    for seed in 0..50 {
        let a = random_instance(seed, 5, 5, 3);
        assert_eq!(a, random_instance(seed, 5, 5, 3));
        assert!((1..=5).contains(&a.donors.len()) && (1..=5).contains(&a.receivers.len()));
        assert!(a.volunteers.len() <= 3);
        assert!(brute_force_pareto_oracle(&a).is_ok());
    }
}

fn record(pct: f64) -> DeliveryRecord {
    let route = Route::new(Location::new(0.0, 0.0), Location::new(10.0, 0.0));
    DeliveryRecord { route, pickup: route.start, dropoff: route.destination, overhead_km: pct / 10.0, overhead_pct: pct }
}

#[test]
fn gamma_bound_examples() {
    let th = Thresholds::default();
    assert!(verify_gamma_bound(&[record(0.0), record(12.5), record(20.0)], &th));
    assert!(verify_gamma_bound(&[], &th));
    assert!(!verify_gamma_bound(&[record(3.0), record(20.5)], &th));
    assert!(!verify_gamma_bound(&[record(f64::NAN)], &th));
}
