//! Counter-based Gaussian streams.
//!
//! The numbers of a sample are addressed by `(master seed, stream tag,
//! sample index)`, so any partition of the sample range over workers draws
//! the same numbers.

use rand_chacha::rand_core::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

/// Address of one sample's random numbers.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct SeedTag {
    pub master: u64,
    /// Distinguishes experiments and levels sharing a master seed.
    pub stream: u64,
    pub index: u64,
}

impl SeedTag {
    pub fn new(master: u64, stream: u64, index: u64) -> Self {
        Self { master, stream, index }
    }
}

/// Stream tags used by the pricing layer.
pub mod streams {
    pub const MLMC: u64 = 1 << 32;
    pub const MC: u64 = 2 << 32;
    pub const STUDY: u64 = 3 << 32;

    pub fn level(base: u64, level: u32) -> u64 {
        base | level as u64
    }
}

/// Samples sharing one ChaCha stream. Sample `i` reads the
/// `draws_per_sample` words starting at `(i % BLOCK) * draws_per_sample` of
/// stream `i / BLOCK`, so its numbers depend on `i` alone.
pub const BLOCK: u64 = 1024;

/// Normal variates for a sequence of equally sized samples.
pub struct GaussianStream {
    rng: ChaCha8Rng,
    key: (u64, u64),
    block: u64,
    draws: u64,
}

impl GaussianStream {
    pub fn new(master: u64, stream: u64, draws_per_sample: u64) -> Self {
        Self { rng: Self::keyed(master, stream, 0), key: (master, stream), block: 0, draws: draws_per_sample }
    }

    /// Whether this stream serves `(master, stream)` samples of the given size.
    pub fn serves(&self, master: u64, stream: u64, draws_per_sample: u64) -> bool {
        self.key == (master, stream) && self.draws == draws_per_sample
    }

    /// Stream positioned at the start of sample `tag.index`.
    pub fn for_sample(tag: SeedTag, draws_per_sample: u64) -> Self {
        let mut g = Self::new(tag.master, tag.stream, draws_per_sample);
        g.start_sample(tag.index);
        g
    }

    fn keyed(master: u64, stream: u64, block: u64) -> ChaCha8Rng {
        let mut key = [0u8; 32];
        key[..8].copy_from_slice(&master.to_le_bytes());
        key[8..16].copy_from_slice(&stream.to_le_bytes());
        key[16..24].copy_from_slice(&0x6d6c_6d63_5f62_6172u64.to_le_bytes());
        let mut rng = ChaCha8Rng::from_seed(key);
        rng.set_stream(block);
        rng
    }

    /// Moves to the first draw of sample `index`; free when the previous
    /// sample of the same block was consumed in full.
    pub fn start_sample(&mut self, index: u64) {
        let block = index / BLOCK;
        if block != self.block {
            self.rng = Self::keyed(self.key.0, self.key.1, block);
            self.block = block;
        }
        // two 32-bit words per draw
        let pos = ((index % BLOCK) * self.draws * 2) as u128;
        if self.rng.get_word_pos() != pos {
            self.rng.set_word_pos(pos);
        }
    }

    /// Uniform on the open interval (0, 1).
    #[inline]
    pub fn uniform(&mut self) -> f64 {
        ((self.rng.next_u64() >> 11) as f64 + 0.5) * (1.0 / (1u64 << 53) as f64)
    }

    #[inline]
    pub fn normal(&mut self) -> f64 {
        inverse_normal_cdf(self.uniform())
    }
}

/// Standard normal quantile (Wichura, AS241 PPND16), relative accuracy ~1e-16.
#[allow(clippy::excessive_precision)]
pub fn inverse_normal_cdf(p: f64) -> f64 {
    const A: [f64; 8] = [
        3.387_132_872_796_366_608,
        1.331_416_678_917_843_774_5e2,
        1.971_590_950_306_551_442_7e3,
        1.373_169_376_550_946_112_5e4,
        4.592_195_393_154_987_145_7e4,
        6.726_577_092_700_870_085_3e4,
        3.343_057_558_358_812_810_5e4,
        2.509_080_928_730_122_672_7e3,
    ];
    const B: [f64; 8] = [
        1.0,
        4.231_333_070_160_091_125_2e1,
        6.871_870_074_920_579_083e2,
        5.394_196_021_424_751_107_7e3,
        2.121_379_430_158_659_586_7e4,
        3.930_789_580_009_271_061e4,
        2.872_908_573_572_194_267_4e4,
        5.226_495_278_852_854_561e3,
    ];
    const C: [f64; 8] = [
        1.423_437_110_749_683_577_34,
        4.630_337_846_156_545_295_9,
        5.769_497_221_460_691_405_5,
        3.647_848_324_763_204_605_04,
        1.270_458_252_452_368_382_58,
        2.417_807_251_774_506_117_7e-1,
        2.272_384_498_926_918_458_33e-2,
        7.745_450_142_783_414_076_4e-4,
    ];
    const D: [f64; 8] = [
        1.0,
        2.053_191_626_637_758_821_87,
        1.676_384_830_183_803_849_4,
        6.897_673_349_851_000_045_5e-1,
        1.481_039_764_274_800_745_9e-1,
        1.519_866_656_361_645_719_66e-2,
        5.475_938_084_995_344_946e-4,
        1.050_750_071_644_416_843_24e-9,
    ];
    const E: [f64; 8] = [
        6.657_904_643_501_103_777_2,
        5.463_784_911_164_114_369_9,
        1.784_826_539_917_291_335_8,
        2.965_605_718_285_048_912_3e-1,
        2.653_218_952_657_612_309_3e-2,
        1.242_660_947_388_078_438_6e-3,
        2.711_555_568_743_487_578_15e-5,
        2.010_334_399_292_288_132_65e-7,
    ];
    const F: [f64; 8] = [
        1.0,
        5.998_322_065_558_879_376_9e-1,
        1.369_298_809_227_358_053_1e-1,
        1.487_536_129_085_061_485_25e-2,
        7.868_691_311_456_132_591e-4,
        1.846_318_317_510_054_681_8e-5,
        1.421_511_758_316_445_888_7e-7,
        2.044_263_103_389_939_785_64e-15,
    ];
    #[inline]
    fn poly(c: &[f64; 8], x: f64) -> f64 {
        c.iter().rev().fold(0.0, |acc, &k| acc * x + k)
    }

    if !(p > 0.0 && p < 1.0) {
        return if p == 0.0 {
            f64::NEG_INFINITY
        } else if p == 1.0 {
            f64::INFINITY
        } else {
            f64::NAN
        };
    }
    let q = p - 0.5;
    if q.abs() <= 0.425 {
        let r = 0.180625 - q * q;
        return q * poly(&A, r) / poly(&B, r);
    }
    let r = if q < 0.0 { p } else { 1.0 - p };
    let r = (-r.ln()).sqrt();
    let x = if r <= 5.0 {
        let r = r - 1.6;
        poly(&C, r) / poly(&D, r)
    } else {
        let r = r - 5.0;
        poly(&E, r) / poly(&F, r)
    };
    if q < 0.0 {
        -x
    } else {
        x
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn quantile_reference_values() {
        // scipy.special.ndtri
        let cases = [
            (0.5, 0.0),
            (0.975, 1.959_963_984_540_054),
            (0.025, -1.959_963_984_540_054),
            (0.1, -1.281_551_565_544_600_4),
            (1e-10, -6.361_340_902_404_056),
            (1e-300, -37.047_096_299_361_2),
        ];
        for (p, x) in cases {
            let got = inverse_normal_cdf(p);
            assert!((got - x).abs() <= 1e-14 * (1.0 + x.abs()), "p={p}: {got} vs {x}");
        }
    }

    #[test]
    fn streams_are_addressed_by_tag() {
        let mut a = GaussianStream::for_sample(SeedTag::new(7, 1, 42), 8);
        let mut b = GaussianStream::for_sample(SeedTag::new(7, 1, 42), 8);
        let mut c = GaussianStream::for_sample(SeedTag::new(7, 1, 43), 8);
        let mut d = GaussianStream::for_sample(SeedTag::new(7, 2, 42), 8);
        let xa: Vec<f64> = (0..8).map(|_| a.normal()).collect();
        let xb: Vec<f64> = (0..8).map(|_| b.normal()).collect();
        let xc: Vec<f64> = (0..8).map(|_| c.normal()).collect();
        let xd: Vec<f64> = (0..8).map(|_| d.normal()).collect();
        assert_eq!(xa, xb);
        assert_ne!(xa, xc);
        assert_ne!(xa, xd);
    }

    #[test]
    fn sample_draws_do_not_depend_on_access_order() {
        let draw = |g: &mut GaussianStream, i: u64| -> Vec<f64> {
            g.start_sample(i);
            (0..3).map(|_| g.normal()).collect()
        };
        let mut seq = GaussianStream::new(1, 2, 3);
        let forward: Vec<Vec<f64>> = (1020..1030).map(|i| draw(&mut seq, i)).collect();
        let mut rev = GaussianStream::new(1, 2, 3);
        for i in (1020..1030).rev() {
            assert_eq!(draw(&mut rev, i), forward[(i - 1020) as usize]);
        }
        // partially consumed samples do not shift the next one
        let mut partial = GaussianStream::new(1, 2, 3);
        partial.start_sample(1021);
        partial.normal();
        assert_eq!(draw(&mut partial, 1022), forward[2]);
    }

    #[test]
    fn uniform_is_open() {
        let mut s = GaussianStream::new(0, 0, 1);
        for _ in 0..10_000 {
            let u = s.uniform();
            assert!(u > 0.0 && u < 1.0);
        }
    }

    #[test]
    fn moments() {
        let mut s = GaussianStream::new(3, 0, 1);
        let n = 200_000;
        let (mut m1, mut m2) = (0.0, 0.0);
        for _ in 0..n {
            let x = s.normal();
            m1 += x;
            m2 += x * x;
        }
        m1 /= n as f64;
        m2 /= n as f64;
        assert!(m1.abs() < 5.0 / (n as f64).sqrt());
        assert!((m2 - 1.0).abs() < 5.0 * (2.0 / n as f64).sqrt());
    }
}
