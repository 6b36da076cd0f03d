use persona_feedback_core::clock::from_millis;
use persona_feedback_core::persona::{
    AttributePair, Persona, PersonaEdit, PersonaError, PersonaId, SectionKind,
};
use proptest::prelude::*;

/// Reference model: four plain lists and a name.
#[derive(Debug, Clone, Default)]
struct Model {
    name: String,
    lists: [Vec<AttributePair>; 4],
}

impl Model {
    fn idx(kind: SectionKind) -> usize {
        SectionKind::ALL.iter().position(|k| *k == kind).unwrap()
    }

    fn apply(&mut self, edit: &PersonaEdit) -> bool {
        match edit {
            PersonaEdit::Rename { name } => {
                self.name = name.clone();
                true
            }
            PersonaEdit::AddPair { section, pair } => {
                if pair.attribute.trim().is_empty() {
                    return false;
                }
                self.lists[Self::idx(*section)].push(pair.clone());
                true
            }
            PersonaEdit::RemovePair { section, index } => {
                let list = &mut self.lists[Self::idx(*section)];
                if *index >= list.len() {
                    return false;
                }
                list.remove(*index);
                true
            }
            PersonaEdit::EditPair {
                section,
                index,
                pair,
            } => {
                let list = &mut self.lists[Self::idx(*section)];
                if *index >= list.len() || pair.attribute.trim().is_empty() {
                    return false;
                }
                list[*index] = pair.clone();
                true
            }
        }
    }

    fn to_persona(&self, id: &PersonaId, created: i64, updated: i64) -> Persona {
        let mut p = Persona::with_id(id.clone(), self.name.clone(), from_millis(created));
        p.sections.role_task = self.lists[0].clone();
        p.sections.background = self.lists[1].clone();
        p.sections.style_preferences = self.lists[2].clone();
        p.sections.content_preferences = self.lists[3].clone();
        p.updated_at = from_millis(updated);
        p
    }
}

fn kind() -> impl Strategy<Value = SectionKind> {
    prop::sample::select(SectionKind::ALL.to_vec())
}

fn pair() -> impl Strategy<Value = AttributePair> {
    ("[ a-zé]{0,6}", "[ a-zA-Z,\"ß]{0,10}").prop_map(|(a, d)| AttributePair::new(a, d))
}

fn edit() -> impl Strategy<Value = PersonaEdit> {
    prop_oneof![
        "[A-Za-z ]{0,8}".prop_map(|name| PersonaEdit::Rename { name }),
        (kind(), pair()).prop_map(|(section, pair)| PersonaEdit::AddPair { section, pair }),
        (kind(), 0usize..5).prop_map(|(section, index)| PersonaEdit::RemovePair { section, index }),
        (kind(), 0usize..5, pair()).prop_map(|(section, index, pair)| PersonaEdit::EditPair {
            section,
            index,
            pair
        }),
    ]
}

proptest! {
    #[test]
    fn edits_match_reference_model(edits in proptest::collection::vec(edit(), 0..40)) {
        let id = PersonaId::new("p");
        let mut persona = Persona::with_id(id.clone(), "", from_millis(0));
        let mut model = Model::default();
        let mut t = 0;
        let mut last_ok = 0;
        for e in &edits {
            t += 7;
            let expected_ok = model.apply(e);
            let got = persona.apply(e.clone(), from_millis(t));
            prop_assert_eq!(got.is_ok(), expected_ok, "{:?} -> {:?}", e, got);
            if expected_ok {
                last_ok = t;
            }
        }
        prop_assert_eq!(persona.to_json(), model.to_persona(&id, 0, last_ok).to_json());
        prop_assert!(persona.updated_at >= persona.created_at);
    }

    #[test]
    fn snapshots_survive_later_edits(
        before in proptest::collection::vec(edit(), 0..15),
        after in proptest::collection::vec(edit(), 1..15),
    ) {
        let mut persona = Persona::with_id(PersonaId::new("p"), "x", from_millis(0));
        for e in before {
            let _ = persona.apply(e, from_millis(1));
        }
        let snap = persona.snapshot_at(from_millis(2));
        let frozen = serde_json::to_string(&snap).unwrap();
        for e in after {
            let _ = persona.apply(e, from_millis(3));
        }
        prop_assert_eq!(serde_json::to_string(&snap).unwrap(), frozen);
    }

    #[test]
    fn serialization_round_trips(edits in proptest::collection::vec(edit(), 0..20)) {
        let mut persona = Persona::with_id(PersonaId::new("p"), "名前", from_millis(1_700_000_000_123));
        for (i, e) in edits.into_iter().enumerate() {
            let _ = persona.apply(e, from_millis(1_700_000_000_123 + i as i64));
        }
        let once = persona.to_json();
        let parsed = Persona::from_json(&once).unwrap();
        prop_assert_eq!(&parsed, &persona);
        prop_assert_eq!(parsed.to_json(), once);
        let value: serde_json::Value = serde_json::from_str(&persona.to_json()).unwrap();
        for kind in SectionKind::ALL {
            prop_assert!(value["sections"].get(kind.key()).is_some());
        }
    }
}

#[test]
fn insertion_order_matches_plain_list() {
    let mut p = Persona::new("x");
    let mut reference = Vec::new();
    for (a, d) in [("one", "1"), ("two", "2"), ("three", "3")] {
        p.add_pair(SectionKind::ContentPreferences, AttributePair::new(a, d))
            .unwrap();
        reference.push(AttributePair::new(a, d));
    }
    assert_eq!(
        p.section(SectionKind::ContentPreferences),
        reference.as_slice()
    );
}

#[test]
fn worked_example_round_trip() {
    let mut p = Persona::new("Reviewer");
    p.add_pair(
        SectionKind::RoleTask,
        AttributePair::new("role", "reviewer"),
    )
    .unwrap();
    p.add_pair(
        SectionKind::Background,
        AttributePair::new("occupation", "CS professor"),
    )
    .unwrap();
    p.add_pair(
        SectionKind::StylePreferences,
        AttributePair::new("writing style", "formal"),
    )
    .unwrap();
    p.add_pair(
        SectionKind::StylePreferences,
        AttributePair::new("sentence length", "short"),
    )
    .unwrap();
    assert_eq!(Persona::from_json(&p.to_json()).unwrap(), p);
}

#[test]
fn unicode_double_round_trip_is_byte_identical() {
    let mut p = Persona::new("Ärztin 👩‍⚕️");
    p.add_pair(
        SectionKind::Background,
        AttributePair::new("Beruf", "Ärztin, 日本語, \"zitiert\""),
    )
    .unwrap();
    let first = p.to_json();
    let second = Persona::from_json(&first).unwrap().to_json();
    assert_eq!(first.as_bytes(), second.as_bytes());
}

#[test]
fn malformed_persona_diagnostics() {
    match Persona::from_json("{\"id\": \"x\",\n \"name\": }") {
        Err(PersonaError::MalformedPersona { line, column, .. }) => {
            assert_eq!(line, 2);
            assert!(column > 0);
        }
        other => panic!("unexpected {other:?}"),
    }
}
