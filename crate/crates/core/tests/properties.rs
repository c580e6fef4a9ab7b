use std::collections::BTreeSet;
use std::sync::Arc;

use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::{json, Value};
use taskloom_core::fixtures::corpus_apps;
use taskloom_core::plan::{Dispatch, Executor, PlanError, PlanState, SubTask, SubTaskResult, Task, TaskSource};
use taskloom_core::reasoner::{fingerprint, PromptBundle, Reasoner, Script, ScriptRule, ScriptedReasoner};
use taskloom_core::registry::{MockServer, Registry};
use taskloom_core::variables::Variable;

fn task(initial: Vec<Variable>) -> Task {
    Task {
        id: "p".into(),
        intent: "property".into(),
        apps_in_scope: vec![],
        initial_context: initial,
        source: TaskSource::Benchmark,
    }
}

/// Drives a plan to its end, answering every dispatch with `answer`.
/// Returns the dispatched ids and the final outcome.
fn drive(
    state: &mut PlanState,
    mut answer: impl FnMut(&SubTask, &taskloom_core::variables::VariableStore) -> SubTaskResult,
) -> (Vec<String>, Result<(), PlanError>) {
    let mut order = Vec::new();
    loop {
        match state.next_step() {
            Ok(Dispatch::Run { index, inputs }) => {
                let st = state.subtasks[index].clone();
                order.push(st.id.clone());
                let r = answer(&st, &inputs);
                state.record_result(&r).unwrap();
            }
            Ok(Dispatch::Conclude) => return (order, Ok(())),
            Err(e) => return (order, Err(e)),
        }
    }
}

proptest! {
    #[test]
    fn loop_expansion_matches_brute_force(items in proptest::collection::vec(-50i64..50, 0..5)) {
        let initial = vec![Variable::initial("items", json!(items))];
        let plan = vec![
            SubTask::new("each", "double it", Executor::Api)
                .consuming(&["items", "it"])
                .producing(&["doubled"])
                .looping("items", "it"),
            SubTask::new("after", "use them", Executor::Api).consuming(&["doubled"]),
        ];
        let mut state = PlanState::new(&task(initial), plan).unwrap();
        let (order, end) = drive(&mut state, |st, inputs| {
            let ex = st.for_execution();
            if ex.produces.is_empty() {
                return SubTaskResult::succeeded(&st.id, vec![], None, 1);
            }
            let v = inputs.value("it").and_then(Value::as_i64).unwrap();
            let produced = vec![Variable::new(st.produces[0].clone(), json!(v * 2), st.id.clone())];
            SubTaskResult::succeeded(&st.id, produced, None, 1)
        });
        prop_assert!(end.is_ok());
        let mut expected: Vec<String> = (0..items.len()).map(|i| format!("each_{i}")).collect();
        expected.push("after".into());
        prop_assert_eq!(order, expected);
        let want: Vec<i64> = items.iter().map(|x| x * 2).collect();
        prop_assert_eq!(state.variables.value("doubled").unwrap(), &json!(want));
        for i in 0..items.len() {
            let name = format!("doubled_{i}");
            prop_assert_eq!(state.variables.value(&name).unwrap(), &json!(items[i] * 2));
        }
    }

    #[test]
    fn dispatch_is_monotone_and_dataflow_sound(
        deps in proptest::collection::vec(proptest::collection::vec(any::<bool>(), 0..8), 1..8),
        fails in proptest::collection::vec(any::<bool>(), 8),
    ) {
        // Sub-task i may consume the output of any j < i, or the seed.
        let n = deps.len();
        let mut plan = Vec::new();
        let mut consumes: Vec<Vec<usize>> = Vec::new();
        for (i, row) in deps.iter().enumerate() {
            let uses: Vec<usize> = row.iter().take(i).enumerate().filter(|(_, b)| **b).map(|(j, _)| j).collect();
            let mut names: Vec<String> = uses.iter().map(|j| format!("out{j}")).collect();
            names.push("seed".into());
            let mut st = SubTask::new(format!("s{i}"), "step", Executor::Api).producing(&[&format!("out{i}")]);
            st.consumes = names;
            plan.push(st);
            consumes.push(uses);
        }
        let mut state = PlanState::new(&task(vec![Variable::initial("seed", json!(0))]), plan).unwrap();
        let mut resolved = 0usize;
        let (order, end) = drive(&mut state, |st, inputs| {
            let i: usize = st.id[1..].parse().unwrap();
            // Every input is bound and came from a sub-task that succeeded earlier.
            for j in &consumes[i] {
                let v = inputs.get(&format!("out{j}")).expect("input bound");
                assert_eq!(v.producer, format!("s{j}"));
            }
            resolved += 1;
            if fails[i] {
                SubTaskResult::failed(&st.id, "scripted failure", 1)
            } else {
                SubTaskResult::succeeded(&st.id, vec![Variable::new(format!("out{i}"), json!(i), st.id.clone())], None, 1)
            }
        });
        // Brute force: a sub-task runs iff all its producers ran and succeeded.
        let mut ran = vec![false; n];
        for i in 0..n {
            ran[i] = consumes[i].iter().all(|&j| ran[j] && !fails[j]);
        }
        let expected: Vec<String> = (0..n).filter(|&i| ran[i]).map(|i| format!("s{i}")).collect();
        prop_assert_eq!(resolved, expected.len());
        prop_assert_eq!(&order, &expected);
        let unique: BTreeSet<&String> = order.iter().collect();
        prop_assert_eq!(unique.len(), order.len());
        if ran.iter().all(|r| *r) {
            prop_assert!(end.is_ok());
        } else {
            prop_assert_eq!(end, Err(PlanError::Deadlock));
        }
    }

    #[test]
    fn scripted_backend_is_pure(goal in "[a-z ]{0,30}", cursor in 0u64..50) {
        let script = Script::default()
            .rule(ScriptRule::new("planner", json!({"pick": "first"})).when("alpha"))
            .rule(ScriptRule::new("planner", json!({"pick": "default"})));
        let bundle = PromptBundle::builder("planner", "t", cursor).instructions(goal).build();
        let a = ScriptedReasoner::new(script.clone()).complete(&bundle);
        let b = ScriptedReasoner::new(script.clone()).complete(&bundle);
        let shared = ScriptedReasoner::new(script);
        let c = shared.complete(&bundle);
        let d = shared.complete(&bundle);
        prop_assert_eq!(&a, &b);
        prop_assert_eq!(&c, &d);
        prop_assert_eq!(&a, &c);
    }
}

#[test]
fn fingerprints_do_not_collide() {
    let mut rng = ChaCha8Rng::seed_from_u64(42);
    let mut seen = BTreeSet::new();
    let mut bundles = BTreeSet::new();
    let pool = ["a", "b", "ab", "", "x\ny"];
    while bundles.len() < 1000 {
        let mut b = PromptBundle::builder(pool[rng.random_range(0..3)], "t", rng.random_range(0..4))
            .instructions(pool[rng.random_range(0..pool.len())]);
        for _ in 0..rng.random_range(0..3) {
            b = b.fragment(pool[rng.random_range(0..pool.len())], pool[rng.random_range(0..pool.len())]);
        }
        let bundle = b.build();
        let key = serde_json::to_string(&(
            &bundle.agent,
            bundle.cursor,
            &bundle.instructions,
            &bundle.context_fragments,
        ))
        .unwrap();
        if bundles.insert(key) {
            seen.insert(fingerprint(&bundle));
            assert_eq!(bundle.step_fingerprint, fingerprint(&bundle));
        }
    }
    assert_eq!(seen.len(), 1000);
}

fn corpus_registry() -> Registry {
    let reg = Registry::new(Arc::new(MockServer::new()));
    for a in corpus_apps() {
        reg.ingest_spec(&a.document, &a.app_id, &format!("http://{}.mock", a.app_id)).unwrap();
    }
    reg
}

#[test]
fn search_is_deterministic_and_respects_scope() {
    let reg = corpus_registry();
    let apps = reg.app_ids();
    let words = ["list", "create", "coral", "violin", "fetch", "entry", "kiln", "summit", "new", "record"];
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for _ in 0..200 {
        let q: Vec<&str> = (0..rng.random_range(1..4)).map(|_| words[rng.random_range(0..words.len())]).collect();
        let q = q.join(" ");
        let scope = (rng.random_bool(0.5)).then(|| apps[rng.random_range(0..apps.len())].clone());
        let k = rng.random_range(1..10);
        let a = reg.search(&q, scope.as_deref(), k).unwrap();
        let b = reg.search(&q, scope.as_deref(), k).unwrap();
        assert_eq!(a, b);
        assert!(a.len() <= k);
        if let Some(s) = &scope {
            assert!(a.iter().all(|h| h.tool_id.starts_with(&format!("{s}."))), "{q} {s}");
        }
        let ids: BTreeSet<&str> = a.iter().map(|h| h.tool_id.as_str()).collect();
        assert_eq!(ids.len(), a.len());
    }
}
