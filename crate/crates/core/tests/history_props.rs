use std::time::Duration;

use persona_feedback_core::clock::from_millis;
use persona_feedback_core::engine::FeedbackResult;
use persona_feedback_core::history::{
    CardContext, CardId, FeedbackCard, History, HistoryError, Selection,
};
use persona_feedback_core::persona::{AttributePair, Persona, PersonaId, SectionKind};
use proptest::prelude::*;

fn card(id: u32, at: i64, persona: &Persona) -> FeedbackCard {
    FeedbackCard::new(
        CardId::new(format!("c{id:03}")),
        persona.snapshot_at(from_millis(at)),
        CardContext {
            document_id: "doc".into(),
            selection: Selection::new(0, 3),
            selected_text: "abc".into(),
        },
        FeedbackResult::new(format!("Feedback {id}."), Duration::from_millis(5), false).unwrap(),
        from_millis(at),
    )
}

#[derive(Debug, Clone)]
enum Op {
    Append { id: u32, at: i64 },
    Delete { pick: usize },
}

fn op() -> impl Strategy<Value = Op> {
    prop_oneof![
        3 => (0u32..60, 0i64..20).prop_map(|(id, at)| Op::Append { id, at }),
        1 => any::<usize>().prop_map(|pick| Op::Delete { pick }),
    ]
}

proptest! {
    #[test]
    fn random_append_delete_keeps_newest_first(ops in proptest::collection::vec(op(), 0..60)) {
        let mut persona = Persona::with_id(PersonaId::new("p"), "P", from_millis(0));
        let mut history = History::new("doc");
        // Oracle: plain list, re-sorted by (created_at desc, id desc) after each change.
        let mut reference: Vec<(i64, String)> = Vec::new();
        let mut frozen: Vec<(CardId, String)> = Vec::new();

        for (step, op) in ops.into_iter().enumerate() {
            persona
                .add_pair(SectionKind::Background, AttributePair::new("step", step.to_string()))
                .unwrap();
            match op {
                Op::Append { id, at } => {
                    let c = card(id, at, &persona);
                    let key = c.id().to_string();
                    let dup = reference.iter().any(|(_, k)| *k == key);
                    let snapshot_json = serde_json::to_string(c.persona()).unwrap();
                    match history.append(c) {
                        Ok(()) => {
                            prop_assert!(!dup);
                            reference.push((at, key.clone()));
                            frozen.push((CardId::new(key), snapshot_json));
                        }
                        Err(HistoryError::DuplicateCard(_)) => prop_assert!(dup),
                        Err(e) => prop_assert!(false, "unexpected {e}"),
                    }
                }
                Op::Delete { pick } => {
                    if reference.is_empty() {
                        prop_assert!(history.delete(&CardId::new("missing")).is_err());
                        continue;
                    }
                    let (_, key) = reference.remove(pick % reference.len());
                    history.delete(&CardId::new(key.clone())).unwrap();
                    frozen.retain(|(id, _)| id.as_str() != key);
                }
            }
            reference.sort_by(|a, b| (b.0, &b.1).cmp(&(a.0, &a.1)));
            let got: Vec<String> = history.cards().iter().map(|c| c.id().to_string()).collect();
            let want: Vec<String> = reference.iter().map(|r| r.1.clone()).collect();
            prop_assert_eq!(got, want);
        }

        for (id, json) in &frozen {
            let c = history.get(id).unwrap();
            prop_assert_eq!(&serde_json::to_string(c.persona()).unwrap(), json);
        }
        let saved = history.save();
        prop_assert_eq!(History::load(&saved).unwrap().save(), saved);
    }
}
