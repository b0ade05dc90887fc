//! Plain-text embedding records.
//!
//! ```text
//! XSUM1 n m d
//! <n text rows of d reals>
//! <m video rows of d reals>
//! GT frame=<int|-> words=<comma list|->
//! <n whitespace-separated tokens>
//! ```

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use super::EmbeddedPair;
use crate::diffcore::Tensor2;
use crate::error::{Error, Result};

pub const RECORD_MAGIC: &str = "XSUM1";

pub fn write_record<W: Write>(pair: &EmbeddedPair, mut w: W) -> Result<()> {
    writeln!(w, "{RECORD_MAGIC} {} {} {}", pair.n_words(), pair.m_frames(), pair.dim())?;
    for t in [&pair.text_low, &pair.video_low] {
        for r in 0..t.rows() {
            let line: Vec<String> = t.row(r).iter().map(|v| format!("{v:?}")).collect();
            writeln!(w, "{}", line.join(" "))?;
        }
    }
    let frame = pair.gt_frame.map_or_else(|| "-".to_string(), |f| f.to_string());
    let words = match &pair.gt_sentence {
        Some(ws) if !ws.is_empty() => ws.iter().map(usize::to_string).collect::<Vec<_>>().join(","),
        _ => "-".to_string(),
    };
    writeln!(w, "GT frame={frame} words={words}")?;
    writeln!(w, "{}", pair.tokens.join(" "))?;
    Ok(())
}

fn next_line<R: BufRead>(lines: &mut std::io::Lines<R>, what: &str) -> Result<String> {
    match lines.next() {
        Some(line) => Ok(line?),
        None => Err(Error::Ingestion(format!("unexpected end of record while reading {what}"))),
    }
}

fn parse_count(s: Option<&str>, what: &str) -> Result<usize> {
    s.ok_or_else(|| Error::Ingestion(format!("header is missing {what}")))?
        .parse()
        .map_err(|_| Error::Ingestion(format!("header field {what} is not a count")))
}

fn parse_rows<R: BufRead>(lines: &mut std::io::Lines<R>, rows: usize, d: usize, what: &str) -> Result<Tensor2> {
    let mut data = Vec::with_capacity(rows * d);
    for r in 0..rows {
        let line = next_line(lines, what)?;
        let before = data.len();
        for tok in line.split_whitespace() {
            let v: f64 = tok
                .parse()
                .map_err(|_| Error::Ingestion(format!("{what} row {r}: bad number {tok:?}")))?;
            data.push(v);
        }
        let got = data.len() - before;
        if got != d {
            return Err(Error::Ingestion(format!("{what} row {r} has {got} values, header says d={d}")));
        }
    }
    Tensor2::from_vec(rows, d, data)
}

fn parse_gt(line: &str) -> Result<(Option<usize>, Option<Vec<usize>>)> {
    let mut parts = line.split_whitespace();
    if parts.next() != Some("GT") {
        return Err(Error::Ingestion(format!("expected GT line, got {line:?}")));
    }
    let mut frame = None;
    let mut words = None;
    for p in parts {
        if let Some(v) = p.strip_prefix("frame=") {
            if v != "-" {
                frame = Some(v.parse().map_err(|_| Error::Ingestion(format!("bad gt frame {v:?}")))?);
            }
        } else if let Some(v) = p.strip_prefix("words=") {
            if v != "-" {
                let ws = v
                    .split(',')
                    .map(|w| w.parse::<usize>().map_err(|_| Error::Ingestion(format!("bad gt word {w:?}"))))
                    .collect::<Result<Vec<_>>>()?;
                words = Some(ws);
            }
        } else {
            return Err(Error::Ingestion(format!("unknown GT field {p:?}")));
        }
    }
    Ok((frame, words))
}

pub fn read_record<R: BufRead>(reader: R) -> Result<EmbeddedPair> {
    let mut lines = reader.lines();
    let header = next_line(&mut lines, "header")?;
    let mut h = header.split_whitespace();
    if h.next() != Some(RECORD_MAGIC) {
        return Err(Error::Ingestion(format!("missing {RECORD_MAGIC} header")));
    }
    let n = parse_count(h.next(), "n")?;
    let m = parse_count(h.next(), "m")?;
    let d = parse_count(h.next(), "d")?;
    let text = parse_rows(&mut lines, n, d, "text")?;
    let video = parse_rows(&mut lines, m, d, "video")?;
    let (gt_frame, gt_sentence) = parse_gt(&next_line(&mut lines, "GT line")?)?;
    let tokens: Vec<String> = next_line(&mut lines, "tokens")?.split_whitespace().map(str::to_string).collect();
    EmbeddedPair::new(text, video, tokens, gt_frame, gt_sentence)
}

pub fn write_record_file(pair: &EmbeddedPair, path: &Path) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    write_record(pair, &mut w)?;
    w.flush()?;
    Ok(())
}

pub fn read_record_file(path: &Path) -> Result<EmbeddedPair> {
    let f = File::open(path).map_err(|e| Error::Path(format!("{}: {e}", path.display())))?;
    read_record(BufReader::new(f))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::embed::{synth_corpus, SynthConfig};

    #[test]
    fn record_round_trips() {
        let cfg = SynthConfig { n_words: 6, m_frames: 4, d: 8, shared_signal_dim: 2, ..SynthConfig::default() };
        for pair in synth_corpus(&cfg, 3).unwrap() {
            let mut buf = Vec::new();
            write_record(&pair, &mut buf).unwrap();
            let back = read_record(buf.as_slice()).unwrap();
            assert_eq!(back.tokens, pair.tokens);
            assert_eq!(back.gt_frame, pair.gt_frame);
            assert_eq!(back.gt_sentence, pair.gt_sentence);
            assert!(back.text_low.max_abs_diff(&pair.text_low) <= 1e-12);
            assert!(back.video_low.max_abs_diff(&pair.video_low) <= 1e-12);
        }
    }

    #[test]
    fn width_mismatch_is_an_ingestion_error() {
        let rec = "XSUM1 1 1 8\n1 2 3 4 5 6 7 8\n1 2 3 4 5 6 7 8 9 10 11 12 13 14 15 16\nGT frame=- words=-\nhello\n";
        assert!(matches!(read_record(rec.as_bytes()), Err(Error::Ingestion(_))));
    }

    #[test]
    fn missing_gt_is_allowed() {
        let rec = "XSUM1 2 1 2\n1 0\n0 1\n0.5 0.5\nGT frame=- words=-\nhello world\n";
        let pair = read_record(rec.as_bytes()).unwrap();
        assert_eq!(pair.gt_frame, None);
        assert_eq!(pair.gt_sentence, None);
        assert_eq!(pair.tokens, vec!["hello", "world"]);
    }

    #[test]
    fn token_count_must_match() {
        let rec = "XSUM1 2 1 2\n1 0\n0 1\n0.5 0.5\nGT frame=0 words=1\nhello\n";
        assert!(read_record(rec.as_bytes()).is_err());
    }
}
