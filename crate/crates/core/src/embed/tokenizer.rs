//! Byte-level BPE tokenizer compatible with the CLIP text encoder.

use std::collections::HashMap;
use std::io::Read;
use std::path::Path;

use flate2::read::GzDecoder;
use regex::Regex;

use crate::error::{Error, Result};

/// Number of merge rules CLIP keeps from its merges file.
const MERGE_COUNT: usize = 49152 - 256 - 2;

#[derive(Debug, Clone)]
pub struct ClipTokenizer {
    encoder: HashMap<String, u32>,
    ranks: HashMap<(String, String), usize>,
    byte_encoder: [char; 256],
    pattern: Regex,
    sot: u32,
    eot: u32,
}

fn bytes_to_unicode() -> [char; 256] {
    let mut printable: Vec<u32> = (b'!' as u32..=b'~' as u32)
        .chain(0xA1..=0xAC)
        .chain(0xAE..=0xFF)
        .collect();
    let mut table = ['\0'; 256];
    for &b in &printable {
        table[b as usize] = char::from_u32(b).unwrap();
    }
    let mut n = 0;
    for b in 0..256u32 {
        if !printable.contains(&b) {
            table[b as usize] = char::from_u32(256 + n).unwrap();
            printable.push(b);
            n += 1;
        }
    }
    table
}

impl ClipTokenizer {
    /// Loads a merges file (`bpe_simple_vocab_16e6.txt`, optionally gzipped).
    pub fn from_file(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let raw = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        let text = if raw.starts_with(&[0x1f, 0x8b]) {
            let mut s = String::new();
            GzDecoder::new(&raw[..])
                .read_to_string(&mut s)
                .map_err(|e| Error::io(path, e))?;
            s
        } else {
            String::from_utf8(raw).map_err(|e| Error::Parse {
                what: path.display().to_string(),
                reason: e.to_string(),
            })?
        };
        Self::from_merges(&text)
    }

    /// Builds the vocabulary from the merges file body. The first line is a
    /// version header.
    pub fn from_merges(text: &str) -> Result<Self> {
        let merges: Vec<(String, String)> = text
            .split('\n')
            .skip(1)
            .take(MERGE_COUNT)
            .filter(|l| !l.is_empty())
            .map(|l| {
                let mut parts = l.split(' ');
                match (parts.next(), parts.next(), parts.next()) {
                    (Some(a), Some(b), None) => Ok((a.to_owned(), b.to_owned())),
                    _ => Err(Error::Parse {
                        what: "BPE merges".into(),
                        reason: format!("bad merge line {l:?}"),
                    }),
                }
            })
            .collect::<Result<_>>()?;
        if merges.is_empty() {
            return Err(Error::Parse {
                what: "BPE merges".into(),
                reason: "no merge rules".into(),
            });
        }
        let byte_encoder = bytes_to_unicode();
        // base symbols in table construction order: printable bytes, then the rest
        let mut base: Vec<char> = byte_encoder.to_vec();
        base.sort_by_key(|&c| (c as u32 >= 256, c as u32));
        let mut vocab: Vec<String> = base.iter().map(|c| c.to_string()).collect();
        vocab.extend(base.iter().map(|c| format!("{c}</w>")));
        vocab.extend(merges.iter().map(|(a, b)| format!("{a}{b}")));
        let sot = vocab.len() as u32;
        let eot = sot + 1;
        let encoder = vocab
            .into_iter()
            .enumerate()
            .map(|(i, v)| (v, i as u32))
            .collect();
        let ranks = merges.into_iter().enumerate().map(|(i, m)| (m, i)).collect();
        let pattern = Regex::new(
            r"(?i)<start_of_text>|<end_of_text>|'s|'t|'re|'ve|'m|'ll|'d|\p{L}+|\p{N}|[^\s\p{L}\p{N}]+",
        )
        .expect("static pattern");
        Ok(Self {
            encoder,
            ranks,
            byte_encoder,
            pattern,
            sot,
            eot,
        })
    }

    pub fn sot(&self) -> u32 {
        self.sot
    }

    pub fn eot(&self) -> u32 {
        self.eot
    }

    pub fn vocab_size(&self) -> usize {
        self.eot as usize + 1
    }

    fn bpe(&self, token: &str) -> Vec<String> {
        let chars: Vec<char> = token.chars().collect();
        let mut word: Vec<String> = chars.iter().map(|c| c.to_string()).collect();
        if let Some(last) = word.last_mut() {
            last.push_str("</w>");
        }
        while word.len() > 1 {
            let best = word
                .windows(2)
                .filter_map(|w| self.ranks.get(&(w[0].clone(), w[1].clone())).map(|&r| (r, w)))
                .min_by_key(|&(r, _)| r);
            let Some((_, pair)) = best else { break };
            let (first, second) = (pair[0].clone(), pair[1].clone());
            let mut merged = Vec::with_capacity(word.len());
            let mut i = 0;
            while i < word.len() {
                if i + 1 < word.len() && word[i] == first && word[i + 1] == second {
                    merged.push(format!("{first}{second}"));
                    i += 2;
                } else {
                    merged.push(std::mem::take(&mut word[i]));
                    i += 1;
                }
            }
            word = merged;
        }
        word
    }

    /// Token ids without begin/end markers.
    pub fn encode(&self, text: &str) -> Vec<u32> {
        let cleaned = text.split_whitespace().collect::<Vec<_>>().join(" ").to_lowercase();
        let mut ids = Vec::new();
        for m in self.pattern.find_iter(&cleaned) {
            match m.as_str() {
                "<start_of_text>" => ids.push(self.sot),
                "<end_of_text>" => ids.push(self.eot),
                piece => {
                    let mapped: String = piece.bytes().map(|b| self.byte_encoder[b as usize]).collect();
                    ids.extend(self.bpe(&mapped).iter().map(|t| self.encoder[t.as_str()]));
                }
            }
        }
        ids
    }

    /// Token count including begin/end markers, before truncation.
    pub fn count(&self, text: &str) -> usize {
        self.encode(text).len() + 2
    }

    /// Fixed-length model input: `[sot, ids.., eot, 0, ..]`, truncated so
    /// the final slot holds `eot`.
    pub fn encode_padded(&self, text: &str, context_length: usize) -> Vec<u32> {
        let mut ids = Vec::with_capacity(context_length);
        ids.push(self.sot);
        ids.extend(self.encode(text));
        ids.push(self.eot);
        if ids.len() > context_length {
            ids.truncate(context_length);
            if let Some(last) = ids.last_mut() {
                *last = self.eot;
            }
        }
        ids.resize(context_length, 0);
        ids
    }
}
