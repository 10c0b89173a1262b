//! Loss tables in long CSV format, prior-belief files and aLTT feeds.

use std::collections::{BTreeMap, HashMap};
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use hypersel_core::reliability::PriorBeliefs;
use hypersel_core::risk::{CandidateSet, LossTable};
use serde::Deserialize;

use crate::error::{HarnessError, Result};

pub const LOSS_HEADER: [&str; 4] = ["sample_id", "candidate_id", "objective", "loss"];

/// Loss table together with the sample identifiers of its rows.
#[derive(Debug, Clone, PartialEq)]
pub struct LoadedTable {
    pub candidates: CandidateSet,
    pub table: LossTable,
    pub sample_ids: Vec<String>,
}

fn open(path: &Path) -> Result<File> {
    File::open(path).map_err(|e| HarnessError::io(path, e))
}

pub fn load_loss_table(path: &Path) -> Result<LoadedTable> {
    read_loss_table(open(path)?).map_err(|e| match e {
        HarnessError::Data(msg) => HarnessError::data(format!("{}: {msg}", path.display())),
        other => other,
    })
}

fn sample_order(ids: &mut [String]) {
    if ids.iter().all(|s| s.parse::<u64>().is_ok()) {
        ids.sort_by_key(|s| s.parse::<u64>().unwrap_or(0));
    } else {
        ids.sort();
    }
}

/// Parses `sample_id,candidate_id,objective,loss` rows in any order.
/// Candidates keep their order of first appearance; samples are sorted
/// (numerically when every identifier is an integer). Objectives are
/// `0..L`. Diagnostics name the 1-based file line.
pub fn read_loss_table<R: Read>(reader: R) -> Result<LoadedTable> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let header = rdr.headers().map_err(|e| HarnessError::data(format!("line 1: {e}")))?.clone();
    if header.iter().collect::<Vec<_>>() != LOSS_HEADER {
        return Err(HarnessError::data(format!("line 1: expected header `{}`", LOSS_HEADER.join(","))));
    }
    let mut cand_order: Vec<String> = Vec::new();
    let mut cand_index: HashMap<String, usize> = HashMap::new();
    let mut sample_index: HashMap<String, usize> = HashMap::new();
    let mut sample_names: Vec<String> = Vec::new();
    let mut cells: HashMap<(usize, usize, usize), (f64, u64)> = HashMap::new();
    let mut n_objectives = 0usize;
    for rec in rdr.records() {
        let rec = rec.map_err(|e| {
            let line = e.position().map_or(0, |p| p.line());
            HarnessError::data(format!("line {line}: malformed row: {e}"))
        })?;
        let line = rec.position().map_or(0, |p| p.line());
        let bad = |what: &str| HarnessError::data(format!("line {line}: {what}"));
        if rec.len() != 4 {
            return Err(bad(&format!("expected 4 fields, found {}", rec.len())));
        }
        let (sample, cand) = (&rec[0], &rec[1]);
        if sample.is_empty() || cand.is_empty() {
            return Err(bad("empty sample_id or candidate_id"));
        }
        let objective: usize = rec[2].parse().map_err(|_| bad(&format!("objective `{}` is not a non-negative integer", &rec[2])))?;
        let loss: f64 = rec[3].parse().map_err(|_| bad(&format!("loss `{}` is not a number", &rec[3])))?;
        if !(0.0..=1.0).contains(&loss) {
            return Err(bad(&format!("loss {loss} outside [0, 1]")));
        }
        let s = *sample_index.entry(sample.to_string()).or_insert_with(|| {
            sample_names.push(sample.to_string());
            sample_names.len() - 1
        });
        let c = *cand_index.entry(cand.to_string()).or_insert_with(|| {
            cand_order.push(cand.to_string());
            cand_order.len() - 1
        });
        n_objectives = n_objectives.max(objective + 1);
        if let Some((_, first)) = cells.insert((s, c, objective), (loss, line)) {
            return Err(bad(&format!("duplicate cell ({sample}, {cand}, {objective}); first given on line {first}")));
        }
    }
    if cells.is_empty() {
        return Err(HarnessError::data("no loss rows"));
    }
    let mut sorted = sample_names.clone();
    sample_order(&mut sorted);
    let rank: HashMap<&str, usize> = sorted.iter().enumerate().map(|(i, s)| (s.as_str(), i)).collect();
    let (n, m) = (sorted.len(), cand_order.len());
    let mut values = vec![f64::NAN; n * m * n_objectives];
    for (&(s, c, o), &(loss, _)) in &cells {
        values[(c * n_objectives + o) * n + rank[sample_names[s].as_str()]] = loss;
    }
    if cells.len() != values.len() {
        let k = values.iter().position(|v| v.is_nan()).expect("some cell is missing");
        let (s, rest) = (k % n, k / n);
        return Err(HarnessError::data(format!(
            "missing cell ({}, {}, {})",
            sorted[s],
            cand_order[rest / n_objectives],
            rest % n_objectives
        )));
    }
    let table = LossTable::from_candidate_major(n, m, n_objectives, values)?;
    Ok(LoadedTable { candidates: CandidateSet::from_ids(cand_order)?, table, sample_ids: sorted })
}

/// Writes the table in long format with shortest round-trip floats.
pub fn write_loss_table<W: Write>(out: W, candidates: &CandidateSet, table: &LossTable, sample_ids: &[String]) -> std::io::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(LOSS_HEADER)?;
    for (s, sample) in sample_ids.iter().enumerate().take(table.n_samples()) {
        for c in 0..table.n_candidates() {
            for o in 0..table.n_objectives() {
                let loss = format!("{:?}", table.get(s, c, o));
                w.write_record([sample.as_str(), candidates.id(c), &o.to_string(), &loss])?;
            }
        }
    }
    w.flush()
}

pub fn save_loss_table(path: &Path, candidates: &CandidateSet, table: &LossTable, sample_ids: &[String]) -> Result<()> {
    let f = File::create(path).map_err(|e| HarnessError::io(path, e))?;
    write_loss_table(BufWriter::new(f), candidates, table, sample_ids).map_err(|e| HarnessError::io(path, e))
}

pub fn numbered_samples(n: usize) -> Vec<String> {
    (0..n).map(|s| s.to_string()).collect()
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct PairBelief {
    better: String,
    worse: String,
    eta: f64,
}

/// Prior file: `ids`, `n_p`, and one of `eta` (dense matrix), `pairs`
/// (`{better, worse, eta}` list, unspecified pairs are 0.5) or `order`
/// (most reliable first, with a scalar `eta` for every ordered pair).
#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct PriorFile {
    ids: Vec<String>,
    n_p: f64,
    #[serde(default)]
    eta: Option<serde_json::Value>,
    #[serde(default)]
    pairs: Option<Vec<PairBelief>>,
    #[serde(default)]
    order: Option<Vec<String>>,
}

pub fn parse_prior(text: &str) -> Result<PriorBeliefs> {
    let f: PriorFile = serde_json::from_str(text).map_err(|e| HarnessError::data(format!("prior: {e}")))?;
    let index: HashMap<&str, usize> = f.ids.iter().enumerate().map(|(i, s)| (s.as_str(), i)).collect();
    let lookup = |id: &str| index.get(id).copied().ok_or_else(|| HarnessError::data(format!("prior: unknown id `{id}`")));
    let prior = match (f.eta, f.pairs, f.order) {
        (Some(serde_json::Value::Array(rows)), None, None) => {
            let dense: Vec<Vec<f64>> = serde_json::from_value(serde_json::Value::Array(rows))
                .map_err(|e| HarnessError::data(format!("prior: eta: {e}")))?;
            if dense.len() != f.ids.len() || dense.iter().any(|r| r.len() != f.ids.len()) {
                return Err(HarnessError::data("prior: eta must be a square matrix over ids"));
            }
            PriorBeliefs::new(f.ids.clone(), dense.concat(), f.n_p)?
        }
        (None, Some(pairs), None) => {
            let triples = pairs
                .iter()
                .map(|p| Ok((lookup(&p.better)?, lookup(&p.worse)?, p.eta)))
                .collect::<Result<Vec<_>>>()?;
            PriorBeliefs::from_pairs(f.ids.clone(), &triples, f.n_p)?
        }
        (Some(serde_json::Value::Number(eta)), None, Some(order)) => {
            let order = order.iter().map(|id| lookup(id)).collect::<Result<Vec<_>>>()?;
            PriorBeliefs::from_order(f.ids.clone(), &order, eta.as_f64().unwrap_or(f64::NAN), f.n_p)?
        }
        _ => return Err(HarnessError::data("prior: give exactly one of `eta` (matrix), `pairs`, or `order` with scalar `eta`")),
    };
    Ok(prior)
}

pub fn load_prior(path: &Path) -> Result<PriorBeliefs> {
    let mut text = String::new();
    open(path)?.read_to_string(&mut text).map_err(|e| HarnessError::io(path, e))?;
    parse_prior(&text).map_err(|e| match e {
        HarnessError::Data(msg) => HarnessError::data(format!("{}: {msg}", path.display())),
        other => other,
    })
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct FeedLine {
    round: u64,
    candidate_id: String,
    loss: f64,
}

/// Per-round loss batches from a JSON-lines feed.
#[derive(Debug, Clone, PartialEq)]
pub struct Feed {
    pub candidates: CandidateSet,
    /// Batches in round order; entries are (candidate index, loss).
    pub rounds: Vec<(u64, Vec<(usize, f64)>)>,
}

/// Reads `{round, candidate_id, loss}` lines. Rounds must be
/// non-decreasing. The candidate set is `declared` when given, otherwise
/// every identifier in order of first appearance.
pub fn read_feed<R: BufRead>(reader: R, declared: Option<&[String]>) -> Result<Feed> {
    let mut ids: Vec<String> = declared.map(<[String]>::to_vec).unwrap_or_default();
    let mut index: HashMap<String, usize> = ids.iter().enumerate().map(|(i, s)| (s.clone(), i)).collect();
    let mut rounds: BTreeMap<u64, Vec<(usize, f64)>> = BTreeMap::new();
    let mut last = None;
    for (k, line) in reader.lines().enumerate() {
        let n = k + 1;
        let line = line.map_err(|e| HarnessError::data(format!("line {n}: {e}")))?;
        if line.trim().is_empty() {
            continue;
        }
        let rec: FeedLine = serde_json::from_str(&line).map_err(|e| HarnessError::data(format!("line {n}: {e}")))?;
        if last.is_some_and(|r| rec.round < r) {
            return Err(HarnessError::data(format!("line {n}: round {} after round {}", rec.round, last.unwrap_or(0))));
        }
        last = Some(rec.round);
        if !(0.0..=1.0).contains(&rec.loss) {
            return Err(HarnessError::data(format!("line {n}: loss {} outside [0, 1]", rec.loss)));
        }
        let c = match index.get(&rec.candidate_id) {
            Some(&c) => c,
            None if declared.is_some() => {
                return Err(HarnessError::data(format!("line {n}: undeclared candidate `{}`", rec.candidate_id)))
            }
            None => {
                ids.push(rec.candidate_id.clone());
                index.insert(rec.candidate_id, ids.len() - 1);
                ids.len() - 1
            }
        };
        rounds.entry(rec.round).or_default().push((c, rec.loss));
    }
    if ids.is_empty() {
        return Err(HarnessError::data("feed declares no candidates"));
    }
    Ok(Feed { candidates: CandidateSet::from_ids(ids)?, rounds: rounds.into_iter().collect() })
}

pub fn load_feed(path: &Path, declared: Option<&[String]>) -> Result<Feed> {
    read_feed(BufReader::new(open(path)?), declared).map_err(|e| match e {
        HarnessError::Data(msg) => HarnessError::data(format!("{}: {msg}", path.display())),
        other => other,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse(text: &str) -> Result<LoadedTable> {
        read_loss_table(text.as_bytes())
    }

    #[test]
    fn reads_any_row_order() {
        let t = parse("sample_id,candidate_id,objective,loss\n1,b,0,0.25\n0,a,0,0.5\n1,a,0,1\n0,b,0,0\n").unwrap();
        assert_eq!((t.table.n_samples(), t.table.n_candidates(), t.table.n_objectives()), (2, 2, 1));
        assert_eq!(t.candidates.ids().collect::<Vec<_>>(), ["b", "a"]);
        assert_eq!(t.table.losses(1, 0), &[0.5, 1.0]);
        assert_eq!(t.table.losses(0, 0), &[0.0, 0.25]);
    }

    #[test]
    fn diagnostics_name_the_row() {
        let dup = parse("sample_id,candidate_id,objective,loss\n0,a,0,0.5\n0,a,0,0.4\n").unwrap_err();
        assert!(dup.to_string().contains("line 3") && dup.to_string().contains("line 2"), "{dup}");
        let range = parse("sample_id,candidate_id,objective,loss\n0,a,0,0.5\n1,a,0,1.2\n").unwrap_err();
        assert!(range.to_string().contains("line 3") && range.to_string().contains("1.2"), "{range}");
        let missing = parse("sample_id,candidate_id,objective,loss\n0,a,0,0.5\n1,b,0,0.5\n").unwrap_err();
        assert!(missing.to_string().contains("missing cell"), "{missing}");
        let malformed = parse("sample_id,candidate_id,objective,loss\n0,a,x,0.5\n").unwrap_err();
        assert!(malformed.to_string().contains("line 2"), "{malformed}");
        let short = parse("sample_id,candidate_id,objective,loss\n0,a,0\n").unwrap_err();
        assert!(short.to_string().contains("line 2"), "{short}");
        assert!(parse("a,b,c,d\n").is_err());
        assert_eq!(dup.exit_code(), 2);
    }

    #[test]
    fn write_then_read_is_exact() {
        let vals = [0.1, 1.0 / 3.0, 0.0, 1.0, 2.0f64.sqrt() / 2.0, 1e-300, 0.7, 0.123456789012345];
        let table = LossTable::from_candidate_major(2, 2, 2, vals.to_vec()).unwrap();
        let cands = CandidateSet::from_ids(["x", "y"]).unwrap();
        let mut buf = Vec::new();
        write_loss_table(&mut buf, &cands, &table, &numbered_samples(2)).unwrap();
        let back = read_loss_table(buf.as_slice()).unwrap();
        assert_eq!(back.table, table);
        assert_eq!(back.candidates, cands);
    }

    #[test]
    fn prior_formats() {
        let dense = parse_prior(r#"{"ids":["a","b"],"n_p":2,"eta":[[0.5,0.8],[0.2,0.5]]}"#).unwrap();
        assert_eq!(dense.eta(0, 1), 0.8);
        let pairs = parse_prior(r#"{"ids":["a","b","c"],"n_p":1,"pairs":[{"better":"c","worse":"a","eta":0.9}]}"#).unwrap();
        assert!((pairs.eta(0, 2) - 0.1).abs() < 1e-15);
        let order = parse_prior(r#"{"ids":["a","b"],"n_p":1,"order":["b","a"],"eta":0.7}"#).unwrap();
        assert_eq!(order.eta(1, 0), 0.7);
        assert!(parse_prior(r#"{"ids":["a"],"n_p":1}"#).is_err());
        assert!(parse_prior(r#"{"ids":["a","b"],"n_p":1,"pairs":[{"better":"z","worse":"a","eta":0.9}]}"#).is_err());
    }

    #[test]
    fn feed_groups_rounds() {
        let text = "{\"round\":0,\"candidate_id\":\"a\",\"loss\":0.1}\n\n{\"round\":0,\"candidate_id\":\"b\",\"loss\":0.3}\n{\"round\":2,\"candidate_id\":\"a\",\"loss\":0}\n";
        let f = read_feed(text.as_bytes(), None).unwrap();
        assert_eq!(f.rounds, vec![(0, vec![(0, 0.1), (1, 0.3)]), (2, vec![(0, 0.0)])]);
        let declared = vec!["b".to_string(), "a".to_string(), "c".to_string()];
        let f = read_feed(text.as_bytes(), Some(&declared)).unwrap();
        assert_eq!(f.candidates.len(), 3);
        assert_eq!(f.rounds[0].1[0], (1, 0.1));
        let backwards = "{\"round\":1,\"candidate_id\":\"a\",\"loss\":0}\n{\"round\":0,\"candidate_id\":\"a\",\"loss\":0}\n";
        assert!(read_feed(backwards.as_bytes(), None).unwrap_err().to_string().contains("line 2"));
    }
}
