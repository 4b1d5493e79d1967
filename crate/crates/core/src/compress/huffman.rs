//! Canonical Huffman coding over `u32` symbols.
//!
//! Code lengths are capped at [`MAX_CODE_LEN`]; codes are assigned canonically
//! (shorter first, ties by symbol) so only `(symbol, length)` pairs need to be
//! stored. Bits are packed MSB-first.

use std::cmp::Reverse;
use std::collections::{BinaryHeap, HashMap};

use crate::error::{Error, Result};

pub const MAX_CODE_LEN: u8 = 32;

/// Canonical codebook: `(symbol, code length)` sorted by `(length, symbol)`.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct Codebook {
    entries: Vec<(u32, u8)>,
}

impl Codebook {
    /// Builds a codebook from symbol frequencies. Zero counts are dropped.
    pub fn from_frequencies(freqs: &HashMap<u32, u64>) -> Self {
        let mut items: Vec<(u32, u64)> = freqs.iter().filter(|(_, &f)| f > 0).map(|(&s, &f)| (s, f)).collect();
        items.sort_unstable();
        match items.len() {
            0 => return Self::default(),
            1 => {
                return Self {
                    entries: vec![(items[0].0, 1)],
                }
            }
            _ => {}
        }
        let mut weights: Vec<u64> = items.iter().map(|&(_, f)| f).collect();
        loop {
            let lengths = code_lengths(&weights);
            if lengths.iter().all(|&l| l <= MAX_CODE_LEN) {
                let mut entries: Vec<(u32, u8)> =
                    items.iter().zip(lengths).map(|(&(s, _), l)| (s, l)).collect();
                entries.sort_unstable_by_key(|&(s, l)| (l, s));
                return Self { entries };
            }
            // flatten the distribution until the tree is shallow enough
            for w in &mut weights {
                *w = (*w >> 1).max(1);
            }
        }
    }

    /// Builds a codebook from stored entries, checking that they form a
    /// canonical prefix code.
    pub fn from_entries(mut entries: Vec<(u32, u8)>) -> Result<Self> {
        entries.sort_unstable_by_key(|&(s, l)| (l, s));
        let mut seen: Vec<u32> = entries.iter().map(|e| e.0).collect();
        seen.sort_unstable();
        if seen.windows(2).any(|w| w[0] == w[1]) {
            return Err(Error::Integrity("duplicate symbol in codebook".into()));
        }
        if entries.iter().any(|&(_, l)| l == 0 || l > MAX_CODE_LEN) {
            return Err(Error::Integrity("code length out of range".into()));
        }
        if entries.len() > 1 {
            // Kraft sum must be exactly one for a complete code
            let kraft: u128 = entries
                .iter()
                .map(|&(_, l)| 1u128 << (MAX_CODE_LEN - l))
                .sum();
            if kraft != 1u128 << MAX_CODE_LEN {
                return Err(Error::Integrity("codebook is not a complete prefix code".into()));
            }
        } else if entries.len() == 1 && entries[0].1 != 1 {
            return Err(Error::Integrity("single-symbol codebook must use length 1".into()));
        }
        Ok(Self { entries })
    }

    pub fn entries(&self) -> &[(u32, u8)] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// `symbol -> (code, length)`.
    fn code_table(&self) -> HashMap<u32, (u32, u8)> {
        let mut table = HashMap::with_capacity(self.entries.len());
        let mut code: u32 = 0;
        let mut prev_len = self.entries.first().map_or(0, |e| e.1);
        for &(sym, len) in &self.entries {
            code <<= len - prev_len;
            table.insert(sym, (code, len));
            code = code.wrapping_add(1);
            prev_len = len;
        }
        table
    }

    /// Mean code length in bits weighted by `freqs`.
    pub fn mean_code_length(&self, freqs: &HashMap<u32, u64>) -> f64 {
        let total: u64 = freqs.values().sum();
        if total == 0 {
            return 0.0;
        }
        let bits: u64 = self
            .entries
            .iter()
            .map(|&(s, l)| freqs.get(&s).copied().unwrap_or(0) * u64::from(l))
            .sum();
        bits as f64 / total as f64
    }
}

/// Plain Huffman code lengths for `weights` (at least two entries).
fn code_lengths(weights: &[u64]) -> Vec<u8> {
    // nodes: leaves 0..n, internal nodes appended; parent links give depths
    let n = weights.len();
    let mut parent = vec![usize::MAX; 2 * n - 1];
    let mut heap: BinaryHeap<Reverse<(u64, usize)>> =
        weights.iter().enumerate().map(|(i, &w)| Reverse((w, i))).collect();
    let mut next = n;
    while heap.len() > 1 {
        let Reverse((w1, a)) = heap.pop().expect("heap has two items");
        let Reverse((w2, b)) = heap.pop().expect("heap has two items");
        parent[a] = next;
        parent[b] = next;
        heap.push(Reverse((w1 + w2, next)));
        next += 1;
    }
    let root = next - 1;
    let mut depth = vec![0u32; 2 * n - 1];
    for node in (0..root).rev() {
        depth[node] = depth[parent[node]] + 1;
    }
    depth[..n].iter().map(|&d| d.min(255) as u8).collect()
}

struct BitWriter {
    bytes: Vec<u8>,
    acc: u64,
    filled: u32,
    total_bits: u64,
}

impl BitWriter {
    fn new() -> Self {
        Self {
            bytes: Vec::new(),
            acc: 0,
            filled: 0,
            total_bits: 0,
        }
    }

    fn put(&mut self, code: u32, len: u8) {
        let len = u32::from(len);
        self.acc = (self.acc << len) | u64::from(code);
        self.filled += len;
        self.total_bits += u64::from(len);
        while self.filled >= 8 {
            self.filled -= 8;
            self.bytes.push((self.acc >> self.filled) as u8);
        }
        self.acc &= (1u64 << self.filled) - 1;
    }

    fn finish(mut self) -> (Vec<u8>, u64) {
        if self.filled > 0 {
            self.bytes.push((self.acc << (8 - self.filled)) as u8);
        }
        (self.bytes, self.total_bits)
    }
}

/// Encodes `symbols` with a codebook built from their own frequencies.
/// Returns the codebook, the packed payload and its length in bits.
pub fn huffman_encode(symbols: &[u32]) -> (Codebook, Vec<u8>, u64) {
    let mut freqs = HashMap::new();
    for &s in symbols {
        *freqs.entry(s).or_insert(0u64) += 1;
    }
    let book = Codebook::from_frequencies(&freqs);
    let (bytes, bits) = encode_with(&book, symbols).expect("codebook covers its own symbols");
    (book, bytes, bits)
}

pub fn encode_with(book: &Codebook, symbols: &[u32]) -> Result<(Vec<u8>, u64)> {
    let table = book.code_table();
    let mut w = BitWriter::new();
    for s in symbols {
        let &(code, len) = table
            .get(s)
            .ok_or_else(|| Error::Integrity(format!("symbol {s} missing from codebook")))?;
        w.put(code, len);
    }
    Ok(w.finish())
}

/// Decodes exactly `count` symbols that must consume exactly `bit_len` bits.
pub fn huffman_decode(bytes: &[u8], bit_len: u64, count: usize, book: &Codebook) -> Result<Vec<u32>> {
    if bit_len > bytes.len() as u64 * 8 || bytes.len() as u64 != bit_len.div_ceil(8) {
        return Err(Error::Integrity("payload length disagrees with its bit count".into()));
    }
    if count == 0 {
        return if bit_len == 0 {
            Ok(Vec::new())
        } else {
            Err(Error::Integrity("trailing payload bits".into()))
        };
    }
    if book.is_empty() {
        return Err(Error::Integrity("empty codebook for a nonempty payload".into()));
    }

    let max_len = book.entries.last().map_or(0, |e| e.1) as usize;
    // canonical decode tables indexed by code length
    let mut first_code = vec![0u64; max_len + 2];
    let mut count_at = vec![0u64; max_len + 2];
    let mut offset = vec![0usize; max_len + 2];
    for &(_, l) in &book.entries {
        count_at[l as usize] += 1;
    }
    let mut code = 0u64;
    let mut idx = 0usize;
    for len in 1..=max_len {
        code <<= 1;
        first_code[len] = code;
        offset[len] = idx;
        code += count_at[len];
        idx += count_at[len] as usize;
    }

    let mut out = Vec::with_capacity(count);
    let mut pos: u64 = 0;
    while out.len() < count {
        let mut code = 0u64;
        let mut len = 0usize;
        loop {
            if pos >= bit_len {
                return Err(Error::Integrity("payload truncated".into()));
            }
            let bit = (bytes[(pos / 8) as usize] >> (7 - (pos % 8))) & 1;
            pos += 1;
            code = (code << 1) | u64::from(bit);
            len += 1;
            if len > max_len {
                return Err(Error::Integrity("invalid code in payload".into()));
            }
            let rel = code.wrapping_sub(first_code[len]);
            if code >= first_code[len] && rel < count_at[len] {
                out.push(book.entries[offset[len] + rel as usize].0);
                break;
            }
        }
    }
    if pos != bit_len {
        return Err(Error::Integrity("trailing payload bits".into()));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn identical_symbols_use_one_bit() {
        let syms = vec![7u32; 1000];
        let (book, bytes, bits) = huffman_encode(&syms);
        assert_eq!(book.entries(), &[(7, 1)]);
        assert_eq!(bits, 1000);
        assert!(bytes.len() <= 1000 / 8 + 1);
        assert_eq!(huffman_decode(&bytes, bits, 1000, &book).unwrap(), syms);
    }

    #[test]
    fn skewed_two_symbol_mean_length() {
        let mut syms = vec![1u32; 900];
        syms.extend(std::iter::repeat_n(2u32, 100));
        // one escape marker on top of the two bins
        syms.push(0);
        let (book, _, bits) = huffman_encode(&syms);
        let mut freqs = HashMap::new();
        for &s in &syms {
            *freqs.entry(s).or_insert(0) += 1;
        }
        let mean = book.mean_code_length(&freqs);
        assert!(mean <= 1.5, "mean {mean}");
        assert_eq!(bits as f64 / syms.len() as f64, mean);
    }

    #[test]
    fn empty_input() {
        let (book, bytes, bits) = huffman_encode(&[]);
        assert!(book.is_empty());
        assert_eq!((bytes.len(), bits), (0, 0));
        assert!(huffman_decode(&bytes, 0, 0, &book).unwrap().is_empty());
    }

    #[test]
    fn wrong_codebook_is_an_integrity_error() {
        let syms: Vec<u32> = (0..200).map(|i| (i * i % 7) as u32).collect();
        let (_, bytes, bits) = huffman_encode(&syms);
        let other = Codebook::from_entries(vec![(0, 1), (1, 2), (2, 3), (3, 3)]).unwrap();
        let res = huffman_decode(&bytes, bits, syms.len(), &other);
        assert!(matches!(res, Err(Error::Integrity(_))) || res.unwrap() != syms);
        // a one-entry book cannot decode a stream containing '1' bits
        let single = Codebook::from_entries(vec![(5, 1)]).unwrap();
        assert!(matches!(
            huffman_decode(&bytes, bits, syms.len(), &single),
            Err(Error::Integrity(_))
        ));
    }

    #[test]
    fn truncated_payload_detected() {
        let syms: Vec<u32> = (0..100).map(|i| i % 5).collect();
        let (book, bytes, bits) = huffman_encode(&syms);
        assert!(huffman_decode(&bytes, bits, syms.len() + 1, &book).is_err());
        assert!(huffman_decode(&bytes[..bytes.len() - 1], bits, syms.len(), &book).is_err());
    }

    #[test]
    fn incomplete_codebook_rejected() {
        assert!(Codebook::from_entries(vec![(0, 1), (1, 2)]).is_err());
        assert!(Codebook::from_entries(vec![(0, 1), (0, 1)]).is_err());
        assert!(Codebook::from_entries(vec![(0, 2)]).is_err());
    }

    #[test]
    fn length_limit_holds_for_fibonacci_weights() {
        // Fibonacci frequencies produce a maximally deep plain Huffman tree
        let mut freqs = HashMap::new();
        let (mut a, mut b) = (1u64, 1u64);
        for s in 0..60u32 {
            freqs.insert(s, a);
            let c = a.saturating_add(b);
            a = b;
            b = c;
        }
        let book = Codebook::from_frequencies(&freqs);
        assert!(book.entries().iter().all(|e| e.1 <= MAX_CODE_LEN));
        assert!(Codebook::from_entries(book.entries().to_vec()).is_ok());
    }

    proptest! {
        #[test]
        fn round_trip(syms in proptest::collection::vec(0u32..40, 0..400)) {
            let (book, bytes, bits) = huffman_encode(&syms);
            let back = huffman_decode(&bytes, bits, syms.len(), &book).unwrap();
            prop_assert_eq!(back, syms);
            let rebuilt = Codebook::from_entries(book.entries().to_vec()).unwrap();
            prop_assert_eq!(rebuilt, book);
        }
    }
}
