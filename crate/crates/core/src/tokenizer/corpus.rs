//! Concatenated token stream with a per-patient offset index.
//!
//! `corpus.bin`: magic `ETHOSBIN`, u32 version, u64 token count, then u32
//! token ids. `corpus.idx`: magic `ETHOSIDX`, u32 version, u64 entry count,
//! then per patient u64 id, u64 offset, u64 length (header + body, without
//! the end-of-timeline token), f64 start age, f64 start year offset.
//! `timestamps.bin` (optional): magic `ETHOSTSB`, u32 version, u64 count,
//! then one f64 age per body token in entry order. All little-endian.

use std::fs;
use std::io::{Read, Write};
use std::path::Path;

use super::pht::{PatientTimeline, TimelineAnchor, HEADER_LEN};
use super::vocab::{TokenId, Vocabulary};
use super::TokenizerError;
use crate::ingest::PatientId;

const BIN_MAGIC: &[u8; 8] = b"ETHOSBIN";
const IDX_MAGIC: &[u8; 8] = b"ETHOSIDX";
const TS_MAGIC: &[u8; 8] = b"ETHOSTSB";
const CORPUS_VERSION: u32 = 1;

pub const CORPUS_BIN: &str = "corpus.bin";
pub const CORPUS_IDX: &str = "corpus.idx";
pub const TIMESTAMPS_BIN: &str = "timestamps.bin";

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CorpusEntry {
    pub patient_id: PatientId,
    pub offset: usize,
    /// Header plus body; the end-of-timeline token follows at `offset + len`.
    pub len: usize,
    pub anchor: TimelineAnchor,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Corpus {
    pub tokens: Vec<TokenId>,
    pub entries: Vec<CorpusEntry>,
}

/// Concatenates timelines, each closed by `end_of_timeline`.
pub fn build_corpus(phts: &[PatientTimeline], end_of_timeline: TokenId) -> Corpus {
    let total: usize = phts.iter().map(|p| p.len() + 1).sum();
    let mut tokens = Vec::with_capacity(total);
    let mut entries = Vec::with_capacity(phts.len());
    for p in phts {
        entries.push(CorpusEntry {
            patient_id: p.patient_id,
            offset: tokens.len(),
            len: p.len(),
            anchor: p.anchor,
        });
        tokens.extend_from_slice(&p.header);
        tokens.extend_from_slice(&p.body);
        tokens.push(end_of_timeline);
    }
    Corpus { tokens, entries }
}

impl Corpus {
    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    /// Header + body of patient `i`.
    pub fn timeline(&self, i: usize) -> &[TokenId] {
        let e = &self.entries[i];
        &self.tokens[e.offset..e.offset + e.len]
    }

    pub fn header(&self, i: usize) -> [TokenId; HEADER_LEN] {
        let e = &self.entries[i];
        self.tokens[e.offset..e.offset + HEADER_LEN].try_into().expect("header length")
    }

    pub fn body(&self, i: usize) -> &[TokenId] {
        let e = &self.entries[i];
        &self.tokens[e.offset + HEADER_LEN..e.offset + e.len]
    }

    /// Rebuilds the (stripped) timelines.
    pub fn timelines(&self) -> Vec<PatientTimeline> {
        (0..self.entries.len())
            .map(|i| PatientTimeline {
                patient_id: self.entries[i].patient_id,
                header: self.header(i),
                body: self.body(i).to_vec(),
                anchor: self.entries[i].anchor,
                timestamps: None,
            })
            .collect()
    }

    /// Entries whose patient id passes `keep`, in the same order.
    pub fn select(&self, keep: impl Fn(PatientId) -> bool) -> Corpus {
        let mut out = Corpus::default();
        for e in &self.entries {
            if !keep(e.patient_id) {
                continue;
            }
            out.entries.push(CorpusEntry { offset: out.tokens.len(), ..*e });
            out.tokens.extend_from_slice(&self.tokens[e.offset..=e.offset + e.len]);
        }
        out
    }

    /// Index of the entry containing stream position `pos`.
    pub fn entry_at(&self, pos: usize) -> Option<usize> {
        let i = self.entries.partition_point(|e| e.offset <= pos);
        (i > 0 && pos <= self.entries[i - 1].offset + self.entries[i - 1].len).then(|| i - 1)
    }

    pub fn class_histogram(&self, vocab: &Vocabulary) -> std::collections::HashMap<super::TokenClass, usize> {
        vocab.class_histogram(&self.tokens)
    }

    pub fn save(&self, dir: &Path) -> Result<(), TokenizerError> {
        fs::create_dir_all(dir)?;
        let mut bin = Vec::with_capacity(20 + 4 * self.tokens.len());
        bin.extend_from_slice(BIN_MAGIC);
        bin.extend_from_slice(&CORPUS_VERSION.to_le_bytes());
        bin.extend_from_slice(&(self.tokens.len() as u64).to_le_bytes());
        for t in &self.tokens {
            bin.extend_from_slice(&t.to_le_bytes());
        }
        fs::File::create(dir.join(CORPUS_BIN))?.write_all(&bin)?;

        let mut idx = Vec::with_capacity(20 + 40 * self.entries.len());
        idx.extend_from_slice(IDX_MAGIC);
        idx.extend_from_slice(&CORPUS_VERSION.to_le_bytes());
        idx.extend_from_slice(&(self.entries.len() as u64).to_le_bytes());
        for e in &self.entries {
            idx.extend_from_slice(&e.patient_id.to_le_bytes());
            idx.extend_from_slice(&(e.offset as u64).to_le_bytes());
            idx.extend_from_slice(&(e.len as u64).to_le_bytes());
            idx.extend_from_slice(&e.anchor.start_age.to_le_bytes());
            idx.extend_from_slice(&e.anchor.start_year_offset.to_le_bytes());
        }
        fs::File::create(dir.join(CORPUS_IDX))?.write_all(&idx)?;
        Ok(())
    }

    pub fn load(dir: &Path) -> Result<Corpus, TokenizerError> {
        let bin = read_all(&dir.join(CORPUS_BIN))?;
        let mut r = Reader { buf: &bin, pos: 0 };
        r.magic(BIN_MAGIC)?;
        let n = r.u64()? as usize;
        if bin.len() != 20 + 4 * n {
            return Err(TokenizerError::Format(format!("corpus.bin holds {} bytes for {n} tokens", bin.len())));
        }
        let tokens = (0..n).map(|_| r.u32()).collect::<Result<Vec<_>, _>>()?;

        let idx = read_all(&dir.join(CORPUS_IDX))?;
        let mut r = Reader { buf: &idx, pos: 0 };
        r.magic(IDX_MAGIC)?;
        let m = r.u64()? as usize;
        let mut entries = Vec::with_capacity(m);
        for _ in 0..m {
            let patient_id = r.u64()?;
            let offset = r.u64()? as usize;
            let len = r.u64()? as usize;
            let start_age = r.f64()?;
            let start_year_offset = r.f64()?;
            if len < HEADER_LEN || offset + len >= tokens.len() {
                return Err(TokenizerError::Format(format!("index entry {patient_id} out of range")));
            }
            entries.push(CorpusEntry {
                patient_id,
                offset,
                len,
                anchor: TimelineAnchor { start_age, start_year_offset },
            });
        }
        if r.pos != idx.len() {
            return Err(TokenizerError::Format("trailing bytes in corpus.idx".into()));
        }
        Ok(Corpus { tokens, entries })
    }
}

/// Writes body timestamps of `phts`, which must match the corpus entry order.
pub fn save_timestamps(dir: &Path, phts: &[PatientTimeline]) -> Result<(), TokenizerError> {
    let n: usize = phts.iter().map(|p| p.body.len()).sum();
    let mut buf = Vec::with_capacity(20 + 8 * n);
    buf.extend_from_slice(TS_MAGIC);
    buf.extend_from_slice(&CORPUS_VERSION.to_le_bytes());
    buf.extend_from_slice(&(n as u64).to_le_bytes());
    for p in phts {
        let ts = p
            .timestamps
            .as_ref()
            .ok_or_else(|| TokenizerError::Format(format!("timeline {} has no timestamps", p.patient_id)))?;
        if ts.len() != p.body.len() {
            return Err(TokenizerError::Format(format!("timeline {} timestamp count mismatch", p.patient_id)));
        }
        for t in ts {
            buf.extend_from_slice(&t.to_le_bytes());
        }
    }
    fs::create_dir_all(dir)?;
    fs::File::create(dir.join(TIMESTAMPS_BIN))?.write_all(&buf)?;
    Ok(())
}

/// Timelines of `corpus` with timestamps read back from `dir`.
pub fn load_timestamped(dir: &Path, corpus: &Corpus) -> Result<Vec<PatientTimeline>, TokenizerError> {
    let buf = read_all(&dir.join(TIMESTAMPS_BIN))?;
    let mut r = Reader { buf: &buf, pos: 0 };
    r.magic(TS_MAGIC)?;
    let n = r.u64()? as usize;
    let expected: usize = corpus.entries.iter().map(|e| e.len - HEADER_LEN).sum();
    if n != expected || buf.len() != 20 + 8 * n {
        return Err(TokenizerError::Format(format!("timestamps.bin holds {n} values, corpus needs {expected}")));
    }
    let mut out = corpus.timelines();
    for p in &mut out {
        p.timestamps = Some((0..p.body.len()).map(|_| r.f64()).collect::<Result<Vec<_>, _>>()?);
    }
    Ok(out)
}

fn read_all(path: &Path) -> Result<Vec<u8>, TokenizerError> {
    let mut buf = Vec::new();
    fs::File::open(path)?.read_to_end(&mut buf)?;
    Ok(buf)
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl Reader<'_> {
    fn take<const N: usize>(&mut self) -> Result<[u8; N], TokenizerError> {
        let s = self
            .buf
            .get(self.pos..self.pos + N)
            .ok_or_else(|| TokenizerError::Format("truncated corpus file".into()))?;
        self.pos += N;
        Ok(s.try_into().expect("slice length"))
    }

    fn magic(&mut self, magic: &[u8; 8]) -> Result<(), TokenizerError> {
        if &self.take::<8>()? != magic {
            return Err(TokenizerError::Format("bad corpus magic".into()));
        }
        let version = u32::from_le_bytes(self.take()?);
        if version != CORPUS_VERSION {
            return Err(TokenizerError::Format(format!("unsupported corpus version {version}")));
        }
        Ok(())
    }

    fn u32(&mut self) -> Result<u32, TokenizerError> {
        Ok(u32::from_le_bytes(self.take()?))
    }

    fn u64(&mut self) -> Result<u64, TokenizerError> {
        Ok(u64::from_le_bytes(self.take()?))
    }

    fn f64(&mut self) -> Result<f64, TokenizerError> {
        Ok(f64::from_le_bytes(self.take()?))
    }
}
