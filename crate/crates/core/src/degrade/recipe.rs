//! Probability-weighted distortion plans and their explicit realizations.
//!
//! A [`DegradationRecipe`] is drawn once per utterance into a
//! [`RealizedDegradation`], which contains every random choice (including
//! packet-loss masks) so that rendering can be replayed without an RNG.
//!
//! The default probabilities and ranges are illustrative desk-scale values,
//! not tuned settings.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::ops::{self, CodecProfile, NrProfile, SPECTRAL_HOLE_BANDS};
use crate::dsp::Waveform;
use crate::error::{Error, Result};

/// Peak level the loudness stage may reach before later stages (clipping).
pub const LOUDNESS_HEADROOM: f32 = 4.0;

/// Inclusive `[min, max]` range, serialized as a two-element array.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(from = "[f64; 2]", into = "[f64; 2]")]
pub struct Span {
    pub min: f64,
    pub max: f64,
}

impl From<[f64; 2]> for Span {
    fn from(v: [f64; 2]) -> Self {
        Span { min: v[0], max: v[1] }
    }
}

impl From<Span> for [f64; 2] {
    fn from(s: Span) -> Self {
        [s.min, s.max]
    }
}

impl Span {
    pub const fn new(min: f64, max: f64) -> Self {
        Span { min, max }
    }

    fn validate(&self, name: &str) -> Result<()> {
        if !(self.min.is_finite() && self.max.is_finite() && self.min <= self.max) {
            return Err(Error::config(format!(
                "{name}: range [{}, {}] must be finite with min <= max",
                self.min, self.max
            )));
        }
        Ok(())
    }

    fn within(&self, name: &str, lo: f64, hi: f64) -> Result<()> {
        self.validate(name)?;
        if self.min < lo || self.max > hi {
            return Err(Error::config(format!(
                "{name}: range [{}, {}] must lie within [{lo}, {hi}]",
                self.min, self.max
            )));
        }
        Ok(())
    }

    fn draw(&self, rng: &mut impl Rng) -> f64 {
        if self.min == self.max {
            self.min
        } else {
            rng.random_range(self.min..=self.max)
        }
    }
}

fn check_prob(name: &str, p: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&p) {
        return Err(Error::config(format!("{name}: probability {p} outside [0, 1]")));
    }
    Ok(())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LoudnessStage {
    pub probability: f64,
    pub gain_db: Span,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReverbStage {
    pub probability: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NoiseStage {
    pub probability: f64,
    pub snr_db: Span,
}

/// Spectral-subtraction artifacts. Only drawn when noise was added.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NrStage {
    pub probability: f64,
    pub over_subtraction: Span,
    pub floor: Span,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum CodecChoice {
    MuLawQuantize { bits: [u32; 2] },
    SpectralHole { holes: [usize; 2] },
    Bitcrush { bits: [u32; 2] },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CodecStage {
    pub probability: f64,
    pub profiles: Vec<CodecChoice>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LowpassStage {
    pub probability: f64,
    pub cutoff_hz: Span,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ClipStage {
    pub probability: f64,
    pub threshold: Span,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PacketLossStage {
    pub probability: f64,
    pub packet_ms: f64,
    pub loss_rate: Span,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DegradationRecipe {
    pub seed: u64,
    pub loudness: LoudnessStage,
    pub reverb: ReverbStage,
    pub noise: NoiseStage,
    pub nr: NrStage,
    pub codec: CodecStage,
    pub lowpass: LowpassStage,
    pub clipping: ClipStage,
    pub packet_loss: PacketLossStage,
}

impl Default for DegradationRecipe {
    fn default() -> Self {
        Self {
            seed: 0,
            loudness: LoudnessStage {
                probability: 0.3,
                gain_db: Span::new(-20.0, 10.0),
            },
            reverb: ReverbStage { probability: 0.3 },
            noise: NoiseStage {
                probability: 0.8,
                snr_db: Span::new(-5.0, 25.0),
            },
            nr: NrStage {
                probability: 0.2,
                over_subtraction: Span::new(1.0, 3.0),
                floor: Span::new(0.005, 0.1),
            },
            codec: CodecStage {
                probability: 0.2,
                profiles: vec![
                    CodecChoice::MuLawQuantize { bits: [6, 10] },
                    CodecChoice::SpectralHole { holes: [1, 3] },
                    CodecChoice::Bitcrush { bits: [6, 12] },
                ],
            },
            lowpass: LowpassStage {
                probability: 0.3,
                cutoff_hz: Span::new(3_000.0, 12_000.0),
            },
            clipping: ClipStage {
                probability: 0.1,
                threshold: Span::new(0.1, 0.6),
            },
            packet_loss: PacketLossStage {
                probability: 0.15,
                packet_ms: 20.0,
                loss_rate: Span::new(0.02, 0.2),
            },
        }
    }
}

impl DegradationRecipe {
    /// Every distortion disabled: rendering returns the clean signal.
    pub fn passthrough(seed: u64) -> Self {
        let mut r = Self {
            seed,
            ..Self::default()
        };
        r.loudness.probability = 0.0;
        r.reverb.probability = 0.0;
        r.noise.probability = 0.0;
        r.nr.probability = 0.0;
        r.codec.probability = 0.0;
        r.lowpass.probability = 0.0;
        r.clipping.probability = 0.0;
        r.packet_loss.probability = 0.0;
        r
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let r: Self = serde_json::from_str(text)?;
        r.validate()?;
        Ok(r)
    }

    pub fn validate(&self) -> Result<()> {
        check_prob("loudness", self.loudness.probability)?;
        self.loudness.gain_db.validate("loudness.gain_db")?;
        check_prob("reverb", self.reverb.probability)?;
        check_prob("noise", self.noise.probability)?;
        self.noise.snr_db.validate("noise.snr_db")?;
        check_prob("nr", self.nr.probability)?;
        self.nr.over_subtraction.within("nr.over_subtraction", 1.0, f64::MAX)?;
        self.nr.floor.validate("nr.floor")?;
        if !(self.nr.floor.min > 0.0 && self.nr.floor.max < 1.0) {
            return Err(Error::config("nr.floor must lie in (0, 1)"));
        }
        check_prob("codec", self.codec.probability)?;
        if self.codec.probability > 0.0 && self.codec.profiles.is_empty() {
            return Err(Error::config("codec stage enabled with no profiles"));
        }
        for p in &self.codec.profiles {
            let ok = match p {
                CodecChoice::MuLawQuantize { bits } => {
                    bits[0] <= bits[1] && bits[0] >= 2 && bits[1] <= 16
                }
                CodecChoice::Bitcrush { bits } => bits[0] <= bits[1] && bits[0] >= 1 && bits[1] <= 16,
                CodecChoice::SpectralHole { holes } => {
                    holes[0] <= holes[1] && holes[1] <= SPECTRAL_HOLE_BANDS
                }
            };
            if !ok {
                return Err(Error::config(format!("invalid codec profile range {p:?}")));
            }
        }
        check_prob("lowpass", self.lowpass.probability)?;
        self.lowpass.cutoff_hz.validate("lowpass.cutoff_hz")?;
        if self.lowpass.cutoff_hz.min <= 0.0 {
            return Err(Error::config("lowpass.cutoff_hz must be positive"));
        }
        check_prob("clipping", self.clipping.probability)?;
        self.clipping.threshold.validate("clipping.threshold")?;
        if !(self.clipping.threshold.min > 0.0 && self.clipping.threshold.max <= 1.0) {
            return Err(Error::config("clipping.threshold must lie in (0, 1]"));
        }
        check_prob("packet_loss", self.packet_loss.probability)?;
        self.packet_loss.loss_rate.within("packet_loss.loss_rate", 0.0, 1.0)?;
        ops::packet_len(self.packet_loss.packet_ms, 48_000)?;
        Ok(())
    }
}

/// Per-utterance seed, independent of processing order.
pub fn utterance_seed(seed: u64, utterance_id: &str) -> u64 {
    let mut h = Sha256::new();
    h.update(seed.to_le_bytes());
    h.update(utterance_id.as_bytes());
    let d = h.finalize();
    u64::from_le_bytes(d[..8].try_into().expect("sha256 has 32 bytes"))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RealizedNoise {
    /// Index into the record's noise paths.
    pub noise_index: usize,
    pub snr_db: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RealizedPacketLoss {
    pub packet_ms: f64,
    pub loss_rate: f64,
    pub mask: Vec<bool>,
}

/// Every choice made for one utterance. `None` means the stage was skipped.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RealizedDegradation {
    pub loudness_gain_db: Option<f64>,
    pub reverb: bool,
    pub noise: Option<RealizedNoise>,
    pub nr: Option<NrProfile>,
    pub codec: Option<CodecProfile>,
    pub lowpass_hz: Option<f64>,
    pub clip_threshold: Option<f64>,
    pub packet_loss: Option<RealizedPacketLoss>,
}

impl RealizedDegradation {
    pub fn is_identity(&self) -> bool {
        self == &RealizedDegradation::default()
    }

    /// Draw a realization. `clean` bounds the loudness gain to the headroom;
    /// `n_noises` and `has_rir` describe what the manifest record provides.
    pub fn draw(
        recipe: &DegradationRecipe,
        utterance_id: &str,
        clean: &Waveform,
        n_noises: usize,
        has_rir: bool,
    ) -> Result<Self> {
        let mut rng = ChaCha8Rng::seed_from_u64(utterance_seed(recipe.seed, utterance_id));
        let mut r = RealizedDegradation::default();
        let nyq = clean.sample_rate() as f64 / 2.0;

        if rng.random_bool(recipe.loudness.probability) {
            let drawn = recipe.loudness.gain_db.draw(&mut rng);
            let peak = clean.peak().max(1e-9);
            let limit = 20.0 * (LOUDNESS_HEADROOM as f64 / peak as f64).log10();
            r.loudness_gain_db = Some(drawn.min(limit));
        }
        if rng.random_bool(recipe.reverb.probability) && has_rir {
            r.reverb = true;
        }
        if rng.random_bool(recipe.noise.probability) && n_noises > 0 {
            r.noise = Some(RealizedNoise {
                noise_index: rng.random_range(0..n_noises),
                snr_db: recipe.noise.snr_db.draw(&mut rng),
            });
        }
        if rng.random_bool(recipe.nr.probability) && r.noise.is_some() {
            r.nr = Some(NrProfile {
                over_subtraction: recipe.nr.over_subtraction.draw(&mut rng),
                floor: recipe.nr.floor.draw(&mut rng),
            });
        }
        if rng.random_bool(recipe.codec.probability) {
            let choice = &recipe.codec.profiles[rng.random_range(0..recipe.codec.profiles.len())];
            r.codec = Some(match choice {
                CodecChoice::MuLawQuantize { bits } => CodecProfile::MuLawQuantize {
                    bits: rng.random_range(bits[0]..=bits[1]),
                },
                CodecChoice::Bitcrush { bits } => CodecProfile::Bitcrush {
                    bits: rng.random_range(bits[0]..=bits[1]),
                },
                CodecChoice::SpectralHole { holes } => {
                    let k = rng.random_range(holes[0]..=holes[1]);
                    let mut bands: Vec<usize> =
                        rand::seq::index::sample(&mut rng, SPECTRAL_HOLE_BANDS, k).into_vec();
                    bands.sort_unstable();
                    CodecProfile::SpectralHole { bands }
                }
            });
        }
        if rng.random_bool(recipe.lowpass.probability) {
            let c = recipe.lowpass.cutoff_hz.draw(&mut rng);
            r.lowpass_hz = Some(c.min(0.95 * nyq));
        }
        if rng.random_bool(recipe.clipping.probability) {
            r.clip_threshold = Some(recipe.clipping.threshold.draw(&mut rng));
        }
        if rng.random_bool(recipe.packet_loss.probability) {
            let rate = recipe.packet_loss.loss_rate.draw(&mut rng);
            let plen = ops::packet_len(recipe.packet_loss.packet_ms, clean.sample_rate())?;
            let mask = ops::draw_loss_mask(clean.len().div_ceil(plen), rate, rng.random())?;
            r.packet_loss = Some(RealizedPacketLoss {
                packet_ms: recipe.packet_loss.packet_ms,
                loss_rate: rate,
                mask,
            });
        }
        Ok(r)
    }

    /// Apply the realization in capture-then-transmission order:
    /// loudness, reverb, noise, NR artifact, codec, low-pass, clipping, packet loss.
    pub fn render(
        &self,
        clean: &Waveform,
        noises: &[Waveform],
        rir: Option<&Waveform>,
    ) -> Result<Waveform> {
        let mut x = clean.clone();
        if let Some(g) = self.loudness_gain_db {
            x = ops::adjust_loudness(&x, g)?;
        }
        if self.reverb {
            let rir = rir.ok_or_else(|| Error::validation("reverb realized without an RIR"))?;
            x = ops::apply_reverb(&x, rir)?;
        }
        if let Some(n) = &self.noise {
            let noise = noises.get(n.noise_index).ok_or_else(|| {
                Error::validation(format!("noise index {} not available", n.noise_index))
            })?;
            let (scaled, _) = ops::scaled_noise(&x, noise, n.snr_db)?;
            let noisy =
                x.with_samples(x.samples().iter().zip(&scaled).map(|(a, b)| a + b).collect())?;
            x = match &self.nr {
                Some(p) => ops::spectral_subtract(&noisy, &x.with_samples(scaled)?, p)?,
                None => noisy,
            };
        }
        if let Some(c) = &self.codec {
            x = ops::codec_sim(&x, c)?;
        }
        if let Some(hz) = self.lowpass_hz {
            x = ops::lowpass(&x, hz)?;
        }
        if let Some(t) = self.clip_threshold {
            x = ops::clip(&x, t)?;
        }
        if let Some(p) = &self.packet_loss {
            let plen = ops::packet_len(p.packet_ms, x.sample_rate())?;
            x = ops::apply_packet_mask(&x, plen, &p.mask)?;
        }
        Ok(x)
    }
}
