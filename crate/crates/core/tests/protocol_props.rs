mod common;

use proptest::prelude::*;

use common::*;
use tripmem_core::protocol::{
    parse_read_call, parse_write_call, sanitize_name, serialize_read, serialize_write,
    validate_name, ParserConfig, StreamParser,
};
use tripmem_core::retrieval::RetrievalThresholds;

fn chunked(text: &str, chunks: &[String]) -> Vec<tripmem_core::StreamEvent> {
    let mut p = StreamParser::default();
    let mut events: Vec<_> = chunks.iter().flat_map(|c| p.feed(c)).collect();
    events.extend(p.finish());
    assert_eq!(chunks.concat(), text);
    events
}

proptest! {
    #[test]
    fn write_calls_round_trip(seed in any::<u64>()) {
        let call = random_write(&mut rng(seed));
        let text = serialize_write(&call).unwrap();
        let back = parse_write_call(&text).unwrap();
        prop_assert_eq!(serialize_write(&back).unwrap(), text);
        prop_assert_eq!(back, call);
    }

    #[test]
    fn read_calls_round_trip(seed in any::<u64>()) {
        let call = random_read(&mut rng(seed), 6);
        let text = serialize_read(&call).unwrap();
        let back = parse_read_call(&text).unwrap();
        prop_assert_eq!(serialize_read(&back).unwrap(), text);
        prop_assert_eq!(back, call);
    }

    #[test]
    fn sanitize_gives_valid_fixed_points(raw in "\\PC{0,20}") {
        if let Some(clean) = sanitize_name(&raw) {
            prop_assert!(validate_name(&clean).is_ok());
            prop_assert_eq!(sanitize_name(&clean), Some(clean));
        }
        if validate_name(&raw).is_ok() {
            prop_assert_eq!(sanitize_name(&raw), Some(raw));
        }
    }

    #[test]
    fn events_cover_arbitrary_input(text in "(\\PC|\\(\\\\\\{|\\\\\\}\\)|\\)-->|MEM_READ\\(|MEM_WRITE-->){0,40}", seed in any::<u64>()) {
        let whole = StreamParser::parse_all(&text, ParserConfig::default());
        prop_assert_eq!(whole.iter().map(|e| e.raw.as_str()).collect::<String>(), text.clone());
        let chunks = random_chunks(&mut rng(seed), &text, 8);
        prop_assert_eq!(chunked(&text, &chunks), whole);
    }

    #[test]
    fn chunking_does_not_change_events(seed in any::<u64>(), cuts in 0usize..60) {
        let mut r = rng(seed);
        let stream = fixture_stream(&mut r);
        let whole = StreamParser::parse_all(&stream, ParserConfig::default());
        let chunks = random_chunks(&mut r, &stream, cuts);
        prop_assert_eq!(chunked(&stream, &chunks), whole);
    }

    #[test]
    fn rewrite_follows_removal_rules(seed in any::<u64>(), q_thr in 1usize..5, cuts in 0usize..20) {
        let mut r = rng(seed);
        let pieces = rewrite_pieces(&mut r, q_thr);
        let generated: String = pieces.iter().map(Piece::text).collect();
        let chunks = random_chunks(&mut r, &generated, cuts);
        let thresholds = RetrievalThresholds { q_thr, ..Default::default() };
        prop_assert_eq!(
            rewrite_replay("Q: ", &chunks, &thresholds),
            rewrite_oracle("Q: ", &pieces, q_thr)
        );
    }
}

#[test]
fn spans_are_character_offsets() {
    let text = "é(\\{MEM_WRITE-->Età>>r>>x\\})中";
    let events = StreamParser::parse_all(text, ParserConfig::default());
    let chars: Vec<char> = text.chars().collect();
    for e in &events {
        let slice: String = chars[e.span.clone()].iter().collect();
        assert_eq!(slice, e.raw);
    }
}
