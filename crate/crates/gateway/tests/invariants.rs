use petwear_core::consent::{ContextTag, NewRequest, RecipientClass, RequestState};
use petwear_core::ledger::{Decision, EventKind, Filter};
use petwear_core::telemetry::{
    kalman_filter, Category, Metric, Sample, DEFAULT_MEASUREMENT_VARIANCE, DEFAULT_PROCESS_VARIANCE,
};
use petwear_gateway::pipeline::{packetize, Packet};
use petwear_gateway::{Gateway, ScenarioConfig};
use proptest::prelude::*;

fn sample(metric: Metric, t: i64, v: f64) -> Sample {
    Sample { device_id: "d".into(), user_id: "u".into(), metric, timestamp_ms: t, value: v, category: metric.category() }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn packetize_preserves_every_reading(
        metrics in prop::collection::vec(0usize..5, 0..200),
        slots in 1usize..20,
    ) {
        let samples: Vec<Sample> = metrics
            .iter()
            .enumerate()
            .map(|(i, &m)| sample(Metric::ALL[m], i as i64, i as f64))
            .collect();
        let packets = packetize(&samples, slots);
        for m in Metric::ALL {
            let want: Vec<f64> = samples.iter().filter(|s| s.metric == m).map(|s| s.value).collect();
            let got: Vec<f64> = packets.iter().filter(|p| p.metric == m).flat_map(|p| p.values.clone()).collect();
            prop_assert_eq!(got, want);
        }
        prop_assert!(packets.iter().all(|p| !p.values.is_empty() && p.values.len() <= slots));
    }

    #[test]
    fn decisions_append_at_most_one_block(decisions in prop::collection::vec((any::<bool>(), any::<bool>()), 1..8)) {
        let gw = Gateway::ephemeral(ScenarioConfig::default()).unwrap();
        let req = gw
            .create_request(NewRequest {
                requester: "lab".into(),
                recipient: RecipientClass::Researcher,
                user_id: "user-000".into(),
                categories: vec![Category::HeartRate],
                context: ContextTag::Routine,
            })
            .unwrap();
        let mut terminal: Option<RequestState> = None;
        for (allow, as_owner) in decisions {
            let d = if allow { Decision::Allow } else { Decision::Deny };
            let actor = if as_owner { "user-000" } else { "someone-else" };
            match gw.decide(&req.request_id, d, actor) {
                Ok(r) => {
                    prop_assert!(as_owner);
                    prop_assert!(terminal.is_none_or(|t| t == r.state));
                    terminal = Some(r.state);
                }
                Err(_) => prop_assert!(!as_owner || terminal.is_some()),
            }
        }
        let decided = gw.ledger_query(&Filter { kind: Some(EventKind::Decided), ..Filter::default() }).len();
        prop_assert_eq!(decided, usize::from(terminal.is_some()));
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    /// Releases through the gateway: unwraps and KeyReleased blocks stay equal,
    /// and raw releases match an independent smooth, clamp and round of the input.
    #[test]
    fn key_release_accounting_and_raw_values(
        values in prop::collection::vec(30.0f64..220.0, 1..80),
        requests in 1usize..4,
    ) {
        let mut cfg = ScenarioConfig::default();
        cfg.dp.budget_per_user = 100.0;
        let gw = Gateway::ephemeral(cfg).unwrap();
        let samples: Vec<Sample> = values.iter().enumerate().map(|(i, &v)| Sample {
            device_id: "device-000".into(),
            user_id: "user-000".into(),
            ..sample(Metric::HeartRateBpm, i as i64 * 1000, v)
        }).collect();
        let packets: Vec<Packet> = packetize(&samples, 16);
        for p in &packets {
            gw.ingest(p).unwrap();
        }
        let (lo, hi) = Metric::HeartRateBpm.range();
        let oracle: Vec<f64> = kalman_filter(&values, DEFAULT_PROCESS_VARIANCE, DEFAULT_MEASUREMENT_VARIANCE)
            .unwrap()
            .into_iter()
            .map(|v| (v.clamp(lo, hi) * 100.0).round() / 100.0)
            .collect();
        for i in 0..requests {
            let r = gw.create_request(NewRequest {
                requester: format!("dr-{i}"),
                recipient: RecipientClass::Clinician,
                user_id: "user-000".into(),
                categories: vec![Category::HeartRate],
                context: ContextTag::Emergency,
            }).unwrap();
            let out = gw.release_for_analysis(&r.request_id).unwrap();
            let raw: Vec<f64> = out.categories[0].raw.iter().flat_map(|s| s.values.clone()).collect();
            prop_assert_eq!(&raw, &oracle);
        }
        let released = gw.ledger_query(&Filter { kind: Some(EventKind::KeyReleased), ..Filter::default() }).len();
        prop_assert_eq!(released as u64, gw.key_unwraps());
        prop_assert_eq!(released, requests);
    }
}
