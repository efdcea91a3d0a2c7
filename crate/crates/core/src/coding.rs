//! Rate-2/3 feedforward convolutional code with zero-tail termination,
//! Viterbi decoding, max-log bit LLRs from symbol posteriors, and a seeded
//! random interleaver.
//!
//! Generator convention: entry `(i, j)` of the octal matrix connects input
//! stream `i` to output stream `j`; the most significant bit of each entry
//! taps the current input, lower bits successively older inputs. Input `i`
//! has constraint length `constraint[i]`.

use rand::seq::SliceRandom;

use crate::error::{Error, Result};
use crate::rng::stream;

/// LLR magnitude used in place of ±∞.
pub const LLR_CLIP: f64 = 50.0;

#[derive(Debug, Clone, PartialEq)]
pub struct ConvCode {
    pub generators: [[u32; 3]; 2],
    pub constraint: [usize; 2],
    next: Vec<[usize; 4]>,
    out: Vec<[u8; 4]>,
}

impl ConvCode {
    /// `[23, 35, 0; 0, 5, 13]` octal with constraint lengths `[5, 4]`.
    pub fn standard() -> Self {
        ConvCode::new([[0o23, 0o35, 0], [0, 0o5, 0o13]], [5, 4])
    }

    pub fn new(generators: [[u32; 3]; 2], constraint: [usize; 2]) -> Self {
        let mut code = ConvCode {
            generators,
            constraint,
            next: Vec::new(),
            out: Vec::new(),
        };
        let states = 1usize << code.memory_bits();
        code.next = vec![[0; 4]; states];
        code.out = vec![[0; 4]; states];
        for s in 0..states {
            for u in 0..4 {
                let (n, o) = code.step(s, [(u >> 1) as u8 & 1, u as u8 & 1]);
                code.next[s][u] = n;
                code.out[s][u] = o;
            }
        }
        code
    }

    fn memory(&self, i: usize) -> usize {
        self.constraint[i] - 1
    }

    fn memory_bits(&self) -> usize {
        self.memory(0) + self.memory(1)
    }

    pub fn states(&self) -> usize {
        self.next.len()
    }

    /// Flush steps needed to return to the zero state.
    pub fn tail_steps(&self) -> usize {
        self.memory(0).max(self.memory(1))
    }

    pub fn tail_bits(&self) -> usize {
        3 * self.tail_steps()
    }

    pub fn encoded_len(&self, info_bits: usize) -> usize {
        info_bits / 2 * 3 + self.tail_bits()
    }

    /// State layout: input-0 register in the high bits, input-1 register in
    /// the low bits, bit 0 of each register the most recent past input.
    fn step(&self, state: usize, input: [u8; 2]) -> (usize, u8) {
        let m1 = self.memory(1);
        let regs = [state >> m1, state & ((1 << m1) - 1)];
        let mut outbits = 0u8;
        for j in 0..3 {
            let mut bit = 0u32;
            for i in 0..2 {
                // full register with the current input at position 0
                let window = ((regs[i] as u32) << 1) | input[i] as u32;
                let taps = self.generators[i][j];
                let k = self.constraint[i] as u32;
                for d in 0..k {
                    let tap = (taps >> (k - 1 - d)) & 1;
                    bit ^= tap & (window >> d) & 1;
                }
            }
            outbits |= (bit as u8) << (2 - j);
        }
        let mask = |i: usize| (1usize << self.memory(i)) - 1;
        let n0 = ((regs[0] << 1) | input[0] as usize) & mask(0);
        let n1 = ((regs[1] << 1) | input[1] as usize) & mask(1);
        ((n0 << m1) | n1, outbits)
    }

    /// Next state and 3 output bits (first output most significant) for
    /// input pair `u = 2·u0 + u1`.
    pub fn edge(&self, state: usize, u: usize) -> (usize, u8) {
        (self.next[state][u], self.out[state][u])
    }
}

/// Encodes pairs `(bits[2t], bits[2t+1])` from the zero state and appends
/// zero-input flush steps.
pub fn conv_encode(code: &ConvCode, bits: &[u8]) -> Result<Vec<u8>> {
    if bits.len() % 2 != 0 {
        return Err(Error::InvalidValue {
            key: "bits".into(),
            reason: format!("rate-2/3 encoder needs an even number of bits, got {}", bits.len()),
        });
    }
    let mut out = Vec::with_capacity(code.encoded_len(bits.len()));
    let mut state = 0;
    let pairs = bits
        .chunks(2)
        .map(|c| ((c[0] & 1) << 1 | (c[1] & 1)) as usize)
        .chain(std::iter::repeat(0).take(code.tail_steps()));
    for u in pairs {
        let (n, o) = code.edge(state, u);
        out.extend([(o >> 2) & 1, (o >> 1) & 1, o & 1]);
        state = n;
    }
    Ok(out)
}

/// Soft-input Viterbi over a zero-tail trellis. `llrs[i] > 0` favours
/// coded bit `i = 0`. Returns the information bits.
pub fn viterbi_decode(code: &ConvCode, llrs: &[f64]) -> Result<Vec<u8>> {
    let steps = llrs.len() / 3;
    if llrs.len() % 3 != 0 || steps < code.tail_steps() {
        return Err(Error::LengthMismatch {
            expected: code.encoded_len(2 * steps.saturating_sub(code.tail_steps())),
            actual: llrs.len(),
        });
    }
    let states = code.states();
    let info_steps = steps - code.tail_steps();
    let mut metric = vec![f64::NEG_INFINITY; states];
    metric[0] = 0.0;
    let mut next_metric = vec![f64::NEG_INFINITY; states];
    // survivor: (previous state, input) per step and state
    let mut back: Vec<(u32, u8)> = vec![(0, 0); steps * states];
    for t in 0..steps {
        let l = &llrs[3 * t..3 * t + 3];
        // correlation of each 3-bit label with the LLRs
        let mut gain = [0.0f64; 8];
        for (label, g) in gain.iter_mut().enumerate() {
            for j in 0..3 {
                let bit = (label >> (2 - j)) & 1;
                *g += if bit == 0 { l[j] } else { -l[j] } * 0.5;
            }
        }
        next_metric.iter_mut().for_each(|m| *m = f64::NEG_INFINITY);
        let inputs = if t < info_steps { 4 } else { 1 };
        for s in 0..states {
            let m = metric[s];
            if m == f64::NEG_INFINITY {
                continue;
            }
            for u in 0..inputs {
                let (n, o) = code.edge(s, u);
                let cand = m + gain[o as usize];
                if cand > next_metric[n] {
                    next_metric[n] = cand;
                    back[t * states + n] = (s as u32, u as u8);
                }
            }
        }
        std::mem::swap(&mut metric, &mut next_metric);
    }
    let mut state = 0usize;
    let mut inputs = vec![0u8; steps];
    for t in (0..steps).rev() {
        let (prev, u) = back[t * states + state];
        inputs[t] = u;
        state = prev as usize;
    }
    Ok(inputs[..info_steps]
        .iter()
        .flat_map(|&u| [(u >> 1) & 1, u & 1])
        .collect())
}

/// Hard-input decoding: each bit becomes an LLR of ±1.
pub fn viterbi_decode_hard(code: &ConvCode, bits: &[u8]) -> Result<Vec<u8>> {
    let llrs: Vec<f64> = bits.iter().map(|&b| if b == 0 { 1.0 } else { -1.0 }).collect();
    viterbi_decode(code, &llrs)
}

/// Max-log bit LLRs from per-symbol posteriors; bit order follows
/// [`crate::frame::Constellation::bit`]. Values are clipped to ±`LLR_CLIP`.
pub fn soft_llrs(posteriors: &[Vec<f64>], alphabet: &crate::frame::Constellation) -> Vec<f64> {
    let bps = alphabet.bits_per_symbol();
    let mut out = Vec::with_capacity(posteriors.len() * bps);
    for p in posteriors {
        for b in 0..bps {
            let (mut best0, mut best1) = (0.0f64, 0.0f64);
            for (s, &v) in p.iter().enumerate() {
                if alphabet.bit(s, b) == 0 {
                    best0 = best0.max(v);
                } else {
                    best1 = best1.max(v);
                }
            }
            let llr = best0.ln() - best1.ln();
            out.push(if llr.is_nan() { 0.0 } else { llr.clamp(-LLR_CLIP, LLR_CLIP) });
        }
    }
    out
}

/// Uniform random permutation drawn from `(seed, "interleaver")`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Interleaver {
    perm: Vec<usize>,
}

impl Interleaver {
    pub fn new(len: usize, seed: u64) -> Self {
        let mut perm: Vec<usize> = (0..len).collect();
        perm.shuffle(&mut stream(seed, "interleaver", 0));
        Interleaver { perm }
    }

    pub fn len(&self) -> usize {
        self.perm.len()
    }

    pub fn is_empty(&self) -> bool {
        self.perm.is_empty()
    }

    /// `out[i] = x[perm[i]]`.
    pub fn interleave<T: Copy>(&self, x: &[T]) -> Vec<T> {
        self.perm.iter().map(|&p| x[p]).collect()
    }

    pub fn deinterleave<T: Copy + Default>(&self, y: &[T]) -> Vec<T> {
        let mut out = vec![T::default(); y.len()];
        for (i, &p) in self.perm.iter().enumerate() {
            out[p] = y[i];
        }
        out
    }
}

/// Bit budget of one coded frame: information bits (even), codeword length
/// and zero padding up to the frame capacity.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CodedLayout {
    pub info_bits: usize,
    pub coded_bits: usize,
    pub pad_bits: usize,
}

impl CodedLayout {
    pub fn for_capacity(code: &ConvCode, capacity: usize) -> Result<Self> {
        if capacity < code.tail_bits() + 3 {
            return Err(Error::InvalidValue {
                key: "capacity".into(),
                reason: format!("{capacity} bits cannot hold a codeword"),
            });
        }
        let steps = (capacity - code.tail_bits()) / 3;
        let info_bits = 2 * steps;
        let coded_bits = code.encoded_len(info_bits);
        Ok(CodedLayout {
            info_bits,
            coded_bits,
            pad_bits: capacity - coded_bits,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::frame::{random_bits, Constellation};
    use proptest::prelude::*;

    #[test]
    fn trellis_shape() {
        let code = ConvCode::standard();
        assert_eq!(code.states(), 128);
        assert!(code.states() <= 1 << (2 * (5 - 1)));
        assert_eq!(code.tail_bits(), 12);
        assert_eq!(code.generators, [[0o23, 0o35, 0], [0, 0o5, 0o13]]);
    }

    #[test]
    fn encoder_test_vector() {
        // produced by an independent shift-register model of the same
        // generator convention
        let code = ConvCode::standard();
        let input: Vec<u8> = "1011001110001011".bytes().map(|b| b - b'0').collect();
        let want: Vec<u8> = "110101010000111111011111100111001110"
            .bytes()
            .map(|b| b - b'0')
            .collect();
        assert_eq!(conv_encode(&code, &input).unwrap(), want);
    }

    #[test]
    fn impulse_responses_follow_the_generators() {
        let code = ConvCode::standard();
        // a single 1 on input 0 emits generator columns 23 and 35 octal
        let out = conv_encode(&code, &[1, 0, 0, 0, 0, 0, 0, 0, 0, 0]).unwrap();
        let stream_j = |j: usize| -> u32 { (0..5).fold(0, |acc, t| (acc << 1) | out[3 * t + j] as u32) };
        assert_eq!(stream_j(0), 0o23);
        assert_eq!(stream_j(1), 0o35);
        assert_eq!(stream_j(2), 0);
        let out = conv_encode(&code, &[0, 1, 0, 0, 0, 0, 0, 0]).unwrap();
        let stream_j = |j: usize| -> u32 { (0..4).fold(0, |acc, t| (acc << 1) | out[3 * t + j] as u32) };
        assert_eq!(stream_j(0), 0);
        assert_eq!(stream_j(1), 0o5);
        assert_eq!(stream_j(2), 0o13);
    }

    #[test]
    fn zero_input_and_lengths() {
        let code = ConvCode::standard();
        assert!(conv_encode(&code, &[0; 20]).unwrap().iter().all(|&b| b == 0));
        assert_eq!(conv_encode(&code, &[0; 20]).unwrap().len(), 30 + 12);
        assert!(conv_encode(&code, &[0; 3]).is_err());
        assert!(viterbi_decode(&code, &[0.0; 10]).is_err());
    }

    #[test]
    fn trellis_edges_match_the_encoder() {
        let code = ConvCode::standard();
        for s in 0..code.states() {
            for u in 0..4 {
                // reach state s from zero by feeding its register contents
                let m1 = 3;
                let (r0, r1) = (s >> m1, s & 7);
                let mut bits = Vec::new();
                for d in (0..4).rev() {
                    bits.push(((r0 >> d) & 1) as u8);
                    bits.push(if d < 3 { ((r1 >> d) & 1) as u8 } else { 0 });
                }
                bits.push((u >> 1) as u8 & 1);
                bits.push(u as u8 & 1);
                let enc = conv_encode(&code, &bits).unwrap();
                let (_, o) = code.edge(s, u);
                assert_eq!(&enc[12..15], &[(o >> 2) & 1, (o >> 1) & 1, o & 1]);
            }
        }
    }

    #[test]
    fn every_single_flip_is_corrected() {
        let code = ConvCode::standard();
        let mut rng = crate::rng::stream(1, "bits", 0);
        for _ in 0..4 {
            let msg = random_bits(32, &mut rng);
            let cw = conv_encode(&code, &msg).unwrap();
            for i in 0..cw.len() {
                let mut bad = cw.clone();
                bad[i] ^= 1;
                assert_eq!(viterbi_decode_hard(&code, &bad).unwrap(), msg, "flip {i}");
            }
        }
    }

    #[test]
    fn llrs_from_posteriors() {
        let qam = Constellation::qam4();
        let llr = soft_llrs(&[vec![0.0, 0.0, 1.0, 0.0]], &qam);
        // symbol 2 is bits 10
        assert_eq!(llr, vec![-LLR_CLIP, LLR_CLIP]);
        let llr = soft_llrs(&[vec![0.25; 4]], &qam);
        assert_eq!(llr, vec![0.0, 0.0]);
    }

    #[test]
    fn layout_for_a_desk_frame() {
        let code = ConvCode::standard();
        let lay = CodedLayout::for_capacity(&code, 2048).unwrap();
        assert_eq!(lay, CodedLayout { info_bits: 1356, coded_bits: 2046, pad_bits: 2 });
    }

    proptest! {
        #[test]
        fn decode_inverts_encode(msg in prop::collection::vec(0u8..2, 0..32).prop_map(|mut v| { if v.len() % 2 == 1 { v.pop(); } v })) {
            let code = ConvCode::standard();
            let cw = conv_encode(&code, &msg).unwrap();
            prop_assert_eq!(viterbi_decode_hard(&code, &cw).unwrap(), msg.clone());
            let strong: Vec<f64> = cw.iter().map(|&b| if b == 0 { 40.0 } else { -40.0 }).collect();
            prop_assert_eq!(viterbi_decode(&code, &strong).unwrap(), msg);
        }

        #[test]
        fn encoder_is_linear(a in prop::collection::vec(0u8..2, 32), b in prop::collection::vec(0u8..2, 32)) {
            let code = ConvCode::standard();
            let x: Vec<u8> = a.iter().zip(&b).map(|(p, q)| p ^ q).collect();
            let ea = conv_encode(&code, &a).unwrap();
            let eb = conv_encode(&code, &b).unwrap();
            let ex = conv_encode(&code, &x).unwrap();
            for i in 0..ex.len() {
                prop_assert_eq!(ex[i], ea[i] ^ eb[i]);
            }
        }

        #[test]
        fn interleaver_round_trip(seed in any::<u64>(), len in 1usize..300) {
            let il = Interleaver::new(len, seed);
            let x: Vec<usize> = (0..len).collect();
            prop_assert_eq!(il.deinterleave(&il.interleave(&x)), x);
            prop_assert_eq!(Interleaver::new(len, seed), il);
        }
    }
}
