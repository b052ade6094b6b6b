//! Byte- and line-level mutations of text inputs for parser fuzzing.

use rand::seq::IndexedRandom;
use rand::Rng;

const TOKENS: &[&str] = &[
    "<", ">", "</", "<!", "!>", "@", "#", "//", "\"", "\\", "=", "-", ",", " ", "\n", "\t", "\r\n", "nan", "inf",
    "-inf", "1e999", "-0", "0", "1", "18446744073709551616", "-9223372036854775809", "open", "closed", "in",
    "out", "from", "to", "SWITCH", "MEAS", "INJ", "TICK", "<Substation>", "</Breaker>", "@ id name", "\u{00e9}",
    "\u{1F50C}", "\0",
];

/// Applies one to four random edits to `input`.
pub fn mutate(input: &[u8], rng: &mut impl Rng) -> Vec<u8> {
    let mut out = input.to_vec();
    for _ in 0..rng.random_range(1..=4) {
        match rng.random_range(0..9) {
            0 if !out.is_empty() => {
                let i = rng.random_range(0..out.len());
                out[i] ^= 1 << rng.random_range(0..8);
            }
            1 if !out.is_empty() => {
                let i = rng.random_range(0..out.len());
                out[i] = rng.random();
            }
            2 if !out.is_empty() => {
                let a = rng.random_range(0..out.len());
                let b = (a + rng.random_range(1..=16)).min(out.len());
                out.drain(a..b);
            }
            3 => {
                let i = rng.random_range(0..=out.len());
                let t = TOKENS.choose(rng).unwrap().as_bytes();
                out.splice(i..i, t.iter().copied());
            }
            4 => out.truncate(rng.random_range(0..=out.len())),
            5..=7 => {
                let mut lines: Vec<Vec<u8>> = out.split(|&b| b == b'\n').map(<[u8]>::to_vec).collect();
                let n = lines.len();
                let (a, b) = (rng.random_range(0..n), rng.random_range(0..n));
                match rng.random_range(0..3) {
                    0 => lines.swap(a, b),
                    1 => {
                        let l = lines[a].clone();
                        lines.insert(b, l);
                    }
                    _ => {
                        lines.remove(a);
                    }
                }
                out = lines.join(&b'\n');
            }
            _ => {
                // replace a whitespace-delimited token
                let starts: Vec<usize> =
                    (0..out.len()).filter(|&i| i == 0 || out[i - 1].is_ascii_whitespace()).collect();
                if let Some(&s) = starts.choose(rng) {
                    let e = (s..out.len()).find(|&i| out[i].is_ascii_whitespace()).unwrap_or(out.len());
                    let t = TOKENS.choose(rng).unwrap().as_bytes();
                    out.splice(s..e, t.iter().copied());
                }
            }
        }
    }
    out
}
