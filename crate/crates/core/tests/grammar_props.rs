mod common;

use taskroute::grammar::{parse_response, render_response, ParseError, RoutedResponse, Segment};
use taskroute::task::{token_table, TaskKind};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Fragments that exercise tag recognition: real tags, near misses, unknown
/// tags and plain words.
fn fragment() -> impl Strategy<Value = String> {
    let tags: Vec<String> = token_table().iter().flat_map(|s| [s.open_tag(), s.close_tag()]).collect();
    prop_oneof![
        3 => proptest::sample::select(tags),
        2 => proptest::sample::select(vec!["<", ">", "</", "<image_gen", "image_gen>", "<IMAGE_GEN>", "<foo>", "</foo>"])
            .prop_map(str::to_string),
        4 => "[a-z ,.é日\n]{0,8}",
    ]
}

fn tag_soup() -> impl Strategy<Value = String> {
    prop::collection::vec(fragment(), 0..12).prop_map(|v| v.concat())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(512))]

    #[test]
    fn render_then_parse_is_identity(seed in any::<u64>()) {
        let r = common::random_response(&mut ChaCha8Rng::seed_from_u64(seed));
        let text = render_response(&r).unwrap();
        prop_assert_eq!(parse_response(&text), Ok(r));
    }

    #[test]
    fn parse_is_total_and_lossless(text in tag_soup()) {
        if let Ok(r) = parse_response(&text) {
            prop_assert_eq!(render_response(&r), Ok(text.clone()));
            for seg in r.segments() {
                if let Segment::Step(s) = seg {
                    prop_assert!(!s.refined_prompt.is_empty());
                }
            }
        }
    }

    #[test]
    fn segments_are_normalized(text in tag_soup()) {
        if let Ok(r) = parse_response(&text) {
            let segs = r.segments();
            for w in segs.windows(2) {
                let both_text = matches!(w, [Segment::Text { .. }, Segment::Text { .. }]);
                prop_assert!(!both_text);
            }
            let empty_text = segs.iter().any(|s| matches!(s, Segment::Text { text } if text.is_empty()));
            prop_assert!(!empty_text);
        }
    }

    #[test]
    fn text_without_angle_brackets_is_plain(text in "[^<]{0,64}") {
        let r = parse_response(&text).unwrap();
        prop_assert!(r.is_direct_answer());
        prop_assert_eq!(r.plain_text(), text);
    }
}

#[test]
fn every_token_round_trips() {
    for spec in token_table() {
        let text = format!("{}x{}", spec.open_tag(), spec.close_tag());
        let r = parse_response(&text).unwrap();
        assert_eq!(r.tasks(), vec![spec.task]);
        assert_eq!(TaskKind::from_token_name(spec.task.token_name()), Some(spec.task));
    }
}

#[test]
fn unknown_and_miscased_tags_are_text() {
    for text in ["<foo>bar</foo>", "<IMAGE_GEN>cat</IMAGE_GEN>", "a < b > c", "<image_gen >x</image_gen >"] {
        assert_eq!(parse_response(text), Ok(RoutedResponse::text(text)), "{text}");
    }
}

#[test]
fn structural_errors() {
    assert!(matches!(parse_response("<image_gen>a cat"), Err(ParseError::UnbalancedTag { offset: 0, .. })));
    assert!(matches!(parse_response("cat</image_gen>"), Err(ParseError::UnbalancedTag { offset: 3, .. })));
    assert!(matches!(
        parse_response("<image_gen>a</video_gen>"),
        Err(ParseError::UnbalancedTag { offset: 12, .. })
    ));
    assert!(matches!(
        parse_response("<image_gen>a<video_gen>b</video_gen></image_gen>"),
        Err(ParseError::NestedTag { .. })
    ));
    assert!(matches!(parse_response("<image_gen></image_gen>"), Err(ParseError::EmptyStep { .. })));
}
