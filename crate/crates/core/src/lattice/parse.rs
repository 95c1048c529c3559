//! Line-oriented text format for lattices.
//!
//! A single lattice is a header line
//! `LATTICE <utterance_id> <true|false|unlabeled> <num_states> <num_arcs>`
//! followed by one line per arc:
//! `<start> <end> <word> <am> <lm> <log_posterior> <frames> <flag1> <flag2> <e1> .. <e14>`
//! (23 whitespace-separated fields). A corpus file is a concatenation of
//! lattices separated by blank lines.

use super::{Arc, ArcFeatures, Label, Lattice, ParseError, PHONE_EMBEDDING_DIM};

const ARC_FIELDS: usize = 9 + PHONE_EMBEDDING_DIM; // 23

/// Parse a single lattice. Line numbers in errors are 1-based within `text`.
pub fn parse_lattice(text: &str) -> Result<Lattice, ParseError> {
    parse_at(text, 1)
}

/// Parse a corpus: lattices separated by one or more blank lines. Line
/// numbers in errors are 1-based within the whole corpus text.
pub fn parse_corpus(text: &str) -> Result<Vec<Lattice>, ParseError> {
    let mut lattices = Vec::new();
    let mut chunk: Vec<&str> = Vec::new();
    let mut chunk_start = 1;
    let mut flush = |chunk: &mut Vec<&str>, start: usize| -> Result<(), ParseError> {
        if !chunk.is_empty() {
            let text = chunk.join("\n");
            lattices.push(parse_at(&text, start)?);
            chunk.clear();
        }
        Ok(())
    };
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            flush(&mut chunk, chunk_start)?;
        } else {
            if chunk.is_empty() {
                chunk_start = i + 1;
            }
            chunk.push(line);
        }
    }
    flush(&mut chunk, chunk_start)?;
    Ok(lattices)
}

fn parse_at(text: &str, first_line: usize) -> Result<Lattice, ParseError> {
    let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
    let (header_off, header) = lines.next().ok_or(ParseError::MalformedHeader {
        line: first_line,
        reason: "empty input".into(),
    })?;
    let header_line = first_line + header_off;

    let fields: Vec<&str> = header.split_whitespace().collect();
    if fields.len() != 5 || fields[0] != "LATTICE" {
        return Err(ParseError::MalformedHeader {
            line: header_line,
            reason: format!(
                "expected 'LATTICE <id> <true|false|unlabeled> <num_states> <num_arcs>', got '{}'",
                header.trim()
            ),
        });
    }
    let utterance_id = fields[1].to_string();
    let label = match fields[2] {
        "true" => Label::TrueTrigger,
        "false" => Label::FalseTrigger,
        "unlabeled" => Label::Unlabeled,
        other => {
            return Err(ParseError::MalformedHeader {
                line: header_line,
                reason: format!("unknown label '{other}'"),
            })
        }
    };
    let num_states: usize = fields[3].parse().map_err(|_| ParseError::MalformedHeader {
        line: header_line,
        reason: format!("num_states '{}' is not a non-negative integer", fields[3]),
    })?;
    let num_arcs: usize = fields[4].parse().map_err(|_| ParseError::MalformedHeader {
        line: header_line,
        reason: format!("num_arcs '{}' is not a non-negative integer", fields[4]),
    })?;
    if num_states == 0 {
        return Err(ParseError::MalformedHeader {
            line: header_line,
            reason: "num_states must be positive".into(),
        });
    }
    if num_arcs == 0 {
        return Err(ParseError::EmptyLattice { line: header_line });
    }

    let mut arcs = Vec::with_capacity(num_arcs);
    let mut arc_lines = Vec::with_capacity(num_arcs);
    for (off, line) in lines {
        let line_no = first_line + off;
        if arcs.len() == num_arcs {
            return Err(ParseError::ArcCountMismatch {
                line: line_no,
                expected: num_arcs,
                got: num_arcs + 1,
            });
        }
        arcs.push(parse_arc(line, line_no, num_states)?);
        arc_lines.push(line_no);
    }
    if arcs.len() != num_arcs {
        return Err(ParseError::ArcCountMismatch {
            line: header_line,
            expected: num_arcs,
            got: arcs.len(),
        });
    }

    check_acyclic(&arcs, &arc_lines, num_states)?;

    Ok(Lattice {
        utterance_id,
        label,
        num_states,
        arcs,
    })
}

fn parse_arc(line: &str, line_no: usize, num_states: usize) -> Result<Arc, ParseError> {
    let fields: Vec<&str> = line.split_whitespace().collect();
    if fields.len() != ARC_FIELDS {
        return Err(ParseError::WrongArcFieldCount {
            line: line_no,
            expected: ARC_FIELDS,
            got: fields.len(),
        });
    }
    let state = |s: &str, field: &'static str| -> Result<usize, ParseError> {
        let v: usize = s.parse().map_err(|_| ParseError::InvalidField {
            line: line_no,
            field,
            reason: format!("'{s}' is not a non-negative integer"),
        })?;
        if v >= num_states {
            return Err(ParseError::StateIndexOutOfRange {
                line: line_no,
                state: v,
                num_states,
            });
        }
        Ok(v)
    };
    let real = |s: &str, field: &'static str| -> Result<f64, ParseError> {
        let v: f64 = s.parse().map_err(|_| ParseError::InvalidField {
            line: line_no,
            field,
            reason: format!("'{s}' is not a real number"),
        })?;
        if !v.is_finite() {
            return Err(ParseError::InvalidField {
                line: line_no,
                field,
                reason: format!("'{s}' is not finite"),
            });
        }
        Ok(v)
    };
    let flag = |s: &str, field: &'static str| -> Result<bool, ParseError> {
        match s {
            "0" => Ok(false),
            "1" => Ok(true),
            _ => Err(ParseError::InvalidField {
                line: line_no,
                field,
                reason: format!("'{s}' is not 0 or 1"),
            }),
        }
    };

    let start_state = state(fields[0], "start_state")?;
    let end_state = state(fields[1], "end_state")?;
    let word = fields[2].to_string();
    let am_score = real(fields[3], "am_score")?;
    let lm_score = real(fields[4], "lm_score")?;
    let log_posterior = real(fields[5], "log_posterior")?;
    if log_posterior > 0.0 {
        return Err(ParseError::InvalidField {
            line: line_no,
            field: "log_posterior",
            reason: format!("{log_posterior} is positive; log-probabilities must be <= 0"),
        });
    }
    let num_frames: u32 = fields[6].parse().map_err(|_| ParseError::InvalidField {
        line: line_no,
        field: "num_frames",
        reason: format!("'{}' is not a non-negative integer", fields[6]),
    })?;
    let trigger_flag_1 = flag(fields[7], "trigger_flag_1")?;
    let trigger_flag_2 = flag(fields[8], "trigger_flag_2")?;
    let mut phone_embedding = [0.0; PHONE_EMBEDDING_DIM];
    for (k, slot) in phone_embedding.iter_mut().enumerate() {
        *slot = real(fields[9 + k], "phone_embedding")?;
    }

    Ok(Arc {
        start_state,
        end_state,
        word,
        features: ArcFeatures {
            phone_embedding,
            am_score,
            lm_score,
            log_posterior,
            num_frames,
            trigger_flag_1,
            trigger_flag_2,
        },
    })
}

/// Kahn's algorithm over the state graph; on failure, report the first arc
/// (in file order) that lies entirely inside the cyclic remainder.
fn check_acyclic(arcs: &[Arc], arc_lines: &[usize], num_states: usize) -> Result<(), ParseError> {
    let mut indegree = vec![0usize; num_states];
    let mut out_edges: Vec<Vec<usize>> = vec![Vec::new(); num_states];
    for arc in arcs {
        indegree[arc.end_state] += 1;
        out_edges[arc.start_state].push(arc.end_state);
    }
    let mut queue: Vec<usize> = (0..num_states).filter(|&s| indegree[s] == 0).collect();
    let mut removed = 0;
    while let Some(s) = queue.pop() {
        removed += 1;
        for &t in &out_edges[s] {
            indegree[t] -= 1;
            if indegree[t] == 0 {
                queue.push(t);
            }
        }
    }
    if removed == num_states {
        return Ok(());
    }
    // states with nonzero indegree are part of (or downstream of) a cycle
    let in_cycle: Vec<bool> = indegree.iter().map(|&d| d > 0).collect();
    let line = arcs
        .iter()
        .zip(arc_lines)
        .find(|(a, _)| in_cycle[a.start_state] && in_cycle[a.end_state])
        .map(|(_, &l)| l)
        .unwrap_or(arc_lines[0]);
    Err(ParseError::CycleDetected { line })
}

/// Round a real to the canonical 9-significant-digit form the serializer
/// prints. Values already in canonical form round-trip exactly.
pub(crate) fn canon9(v: f64) -> f64 {
    format_real(v).parse().expect("canonical real reparses")
}

fn format_real(v: f64) -> String {
    format!("{:.8e}", v)
}

/// Serialize one lattice to canonical text: deterministic, reals at
/// 9 significant digits, one trailing newline.
pub fn serialize_lattice(lattice: &Lattice) -> String {
    let mut out = String::new();
    out.push_str(&format!(
        "LATTICE {} {} {} {}\n",
        lattice.utterance_id,
        lattice.label.as_str(),
        lattice.num_states,
        lattice.arcs.len()
    ));
    for arc in &lattice.arcs {
        let f = &arc.features;
        out.push_str(&format!(
            "{} {} {} {} {} {} {} {} {}",
            arc.start_state,
            arc.end_state,
            arc.word,
            format_real(f.am_score),
            format_real(f.lm_score),
            format_real(f.log_posterior),
            f.num_frames,
            f.trigger_flag_1 as u8,
            f.trigger_flag_2 as u8,
        ));
        for e in &f.phone_embedding {
            out.push(' ');
            out.push_str(&format_real(*e));
        }
        out.push('\n');
    }
    out
}

/// Serialize a corpus: lattices separated by a single blank line.
pub fn serialize_corpus(lattices: &[Lattice]) -> String {
    let mut out = String::new();
    for (i, lat) in lattices.iter().enumerate() {
        if i > 0 {
            out.push('\n');
        }
        out.push_str(&serialize_lattice(lat));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn arc_line(start: usize, end: usize, word: &str) -> String {
        let embed: Vec<String> = (0..PHONE_EMBEDDING_DIM).map(|k| format!("0.{k}")).collect();
        format!("{start} {end} {word} -3.5 -1.25 -0.1 12 1 0 {}", embed.join(" "))
    }

    #[test]
    fn parses_minimal_lattice() {
        let text = format!("LATTICE u1 true 2 1\n{}", arc_line(0, 1, "hi"));
        let lat = parse_lattice(&text).unwrap();
        assert_eq!(lat.utterance_id, "u1");
        assert_eq!(lat.label, Label::TrueTrigger);
        assert_eq!(lat.num_arcs(), 1);
        assert_eq!(lat.arcs[0].word, "hi");
        assert_eq!(lat.arcs[0].features.num_frames, 12);
        assert!(lat.arcs[0].features.trigger_flag_1);
    }

    #[test]
    fn state_index_out_of_range_names_line() {
        let text = format!("LATTICE u1 true 2 1\n{}", arc_line(0, 5, "hi"));
        let err = parse_lattice(&text).unwrap_err();
        assert_eq!(
            err,
            ParseError::StateIndexOutOfRange {
                line: 2,
                state: 5,
                num_states: 2
            }
        );
    }

    #[test]
    fn cycle_detected() {
        let text = format!(
            "LATTICE u1 true 2 2\n{}\n{}",
            arc_line(0, 1, "a"),
            arc_line(1, 0, "b")
        );
        let err = parse_lattice(&text).unwrap_err();
        assert!(matches!(err, ParseError::CycleDetected { line } if line == 2 || line == 3));
    }

    #[test]
    fn zero_arcs_rejected() {
        let err = parse_lattice("LATTICE u1 true 2 0\n").unwrap_err();
        assert_eq!(err, ParseError::EmptyLattice { line: 1 });
    }

    #[test]
    fn wrong_field_count_names_line() {
        let text = "LATTICE u1 true 2 1\n0 1 hi -3.5";
        let err = parse_lattice(text).unwrap_err();
        assert_eq!(
            err,
            ParseError::WrongArcFieldCount {
                line: 2,
                expected: 23,
                got: 4
            }
        );
    }

    #[test]
    fn malformed_header_variants() {
        assert!(matches!(
            parse_lattice("NOTLATTICE u1 true 2 1").unwrap_err(),
            ParseError::MalformedHeader { line: 1, .. }
        ));
        assert!(matches!(
            parse_lattice("LATTICE u1 maybe 2 1").unwrap_err(),
            ParseError::MalformedHeader { line: 1, .. }
        ));
        assert!(matches!(
            parse_lattice("LATTICE u1 true x 1").unwrap_err(),
            ParseError::MalformedHeader { line: 1, .. }
        ));
    }

    #[test]
    fn positive_log_posterior_rejected() {
        let embed: Vec<String> = (0..PHONE_EMBEDDING_DIM).map(|_| "0.0".into()).collect();
        let text = format!(
            "LATTICE u1 true 2 1\n0 1 hi -3.5 -1.25 0.5 12 1 0 {}",
            embed.join(" ")
        );
        let err = parse_lattice(&text).unwrap_err();
        assert!(matches!(
            err,
            ParseError::InvalidField {
                line: 2,
                field: "log_posterior",
                ..
            }
        ));
    }

    #[test]
    fn arc_count_mismatch() {
        let text = format!(
            "LATTICE u1 true 3 1\n{}\n{}",
            arc_line(0, 1, "a"),
            arc_line(1, 2, "b")
        );
        assert!(matches!(
            parse_lattice(&text).unwrap_err(),
            ParseError::ArcCountMismatch { .. }
        ));
        let text = format!("LATTICE u1 true 3 2\n{}", arc_line(0, 1, "a"));
        assert!(matches!(
            parse_lattice(&text).unwrap_err(),
            ParseError::ArcCountMismatch {
                line: 1,
                expected: 2,
                got: 1
            }
        ));
    }

    #[test]
    fn serialize_round_trips_structurally() {
        let text = format!(
            "LATTICE u7 false 3 2\n{}\n{}",
            arc_line(0, 1, "hey"),
            arc_line(1, 2, "don")
        );
        let lat = parse_lattice(&text).unwrap();
        let round = parse_lattice(&serialize_lattice(&lat)).unwrap();
        assert_eq!(lat, round);
    }

    #[test]
    fn serialize_is_deterministic_and_two_lines_for_one_arc() {
        let text = format!("LATTICE u1 true 2 1\n{}", arc_line(0, 1, "hi"));
        let lat = parse_lattice(&text).unwrap();
        let a = serialize_lattice(&lat);
        let b = serialize_lattice(&lat);
        assert_eq!(a, b);
        assert_eq!(a.trim_end().lines().count(), 2);
    }

    #[test]
    fn corpus_round_trip() {
        let text = format!(
            "LATTICE u1 true 2 1\n{}\n\nLATTICE u2 false 2 1\n{}\n",
            arc_line(0, 1, "hi"),
            arc_line(0, 1, "hey")
        );
        let lats = parse_corpus(&text).unwrap();
        assert_eq!(lats.len(), 2);
        let round = parse_corpus(&serialize_corpus(&lats)).unwrap();
        assert_eq!(lats, round);
    }

    #[test]
    fn corpus_error_uses_absolute_line_numbers() {
        let text = format!(
            "LATTICE u1 true 2 1\n{}\n\nLATTICE u2 false 2 1\n{}",
            arc_line(0, 1, "hi"),
            arc_line(0, 9, "hey")
        );
        let err = parse_corpus(&text).unwrap_err();
        assert_eq!(
            err,
            ParseError::StateIndexOutOfRange {
                line: 5,
                state: 9,
                num_states: 2
            }
        );
    }

    #[test]
    fn canon9_round_trip_is_idempotent() {
        for v in [0.0, 1.0, -2.5, 0.123456789123, -9.87654321e-7, 1234567.891] {
            let c = canon9(v);
            assert_eq!(canon9(c), c);
            assert_eq!(format_real(canon9(c)), format_real(c));
        }
    }
}
