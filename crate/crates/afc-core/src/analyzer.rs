//! The measurement chain: unbalanced Mach–Zehnder interferometers (UMZIs)
//! as three-slot POVMs, single-photon detectors, and two-/three-fold
//! coincidence counting against the source clock.

use alloc::string::String;
use alloc::vec::Vec;
use core::fmt;

use rand::Rng;
use rand_distr::{Distribution, Normal, Poisson};

#[allow(unused_imports)]
use num_traits::Float;

use crate::linalg::{CMat2, C64};
use crate::quantum::{TwoQubitKet, TwoQubitState};
use crate::rng::rng_from_seed;
use crate::Error;

#[derive(Clone, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(deny_unknown_fields))]
pub struct UmziConfig {
    pub arm_delay_ns: f64,
    pub phase: f64,
    /// Power fraction sent into the short arm (and, at the second splitter,
    /// from the short arm to port 1).
    pub splitting_ratio: f64,
}

impl Default for UmziConfig {
    fn default() -> Self {
        UmziConfig {
            arm_delay_ns: 1.25,
            phase: 0.0,
            splitting_ratio: 0.5,
        }
    }
}

impl UmziConfig {
    pub fn with_phase(phase: f64) -> Self {
        UmziConfig {
            phase,
            ..UmziConfig::default()
        }
    }

    /// Checks the indistinguishability condition against the pump pulse
    /// interval (1 ps tolerance) and the splitter range.
    pub fn validate(&self, pulse_interval_ns: f64) -> Result<(), Error> {
        if (self.arm_delay_ns - pulse_interval_ns).abs() > 1e-3 {
            return Err(Error::InvalidParameter {
                name: "umzi.arm_delay_ns",
                reason: alloc::format!(
                    "{} ns does not match the pump pulse interval {} ns within 1 ps",
                    self.arm_delay_ns,
                    pulse_interval_ns
                ),
            });
        }
        if !(self.splitting_ratio > 0.0 && self.splitting_ratio < 1.0) {
            return Err(Error::InvalidParameter {
                name: "umzi.splitting_ratio",
                reason: String::from("must lie in (0, 1)"),
            });
        }
        Ok(())
    }

    pub fn povm(&self) -> [PovmElement; 6] {
        umzi_povm_with_ratio(self.phase, self.splitting_ratio)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub enum Port {
    One,
    Two,
}

impl Port {
    pub const ALL: [Port; 2] = [Port::One, Port::Two];

    pub fn index(self) -> usize {
        match self {
            Port::One => 0,
            Port::Two => 1,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub enum Slot {
    Early,
    Middle,
    Late,
}

impl Slot {
    pub const ALL: [Slot; 3] = [Slot::Early, Slot::Middle, Slot::Late];

    pub fn index(self) -> usize {
        match self {
            Slot::Early => 0,
            Slot::Middle => 1,
            Slot::Late => 2,
        }
    }

    pub fn from_index(i: usize) -> Slot {
        Slot::ALL[i]
    }
}

/// Rank-one POVM element `|v⟩⟨v|` with an unnormalized `v`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PovmElement {
    pub port: Port,
    pub slot: Slot,
    pub vector: [C64; 2],
}

impl PovmElement {
    pub fn operator(&self) -> CMat2 {
        CMat2::outer(self.vector)
    }

    /// Flat outcome index `port*3 + slot`.
    pub fn outcome(&self) -> usize {
        outcome_index(self.port, self.slot)
    }
}

pub fn outcome_index(port: Port, slot: Slot) -> usize {
    port.index() * 3 + slot.index()
}

/// The six POVM elements of a balanced UMZI with phase `φ`.
///
/// Early and late slots give `¼|e⟩⟨e|`, `¼|l⟩⟨l|` on each port; the middle
/// slot of port 1 gives `¼|u₊⟩⟨u₊|` and of port 2 `¼|u₋⟩⟨u₋|` with
/// `|u±⟩ = |e⟩ ± e^{-iφ}|l⟩`.
pub fn umzi_povm(phase: f64) -> [PovmElement; 6] {
    umzi_povm_with_ratio(phase, 0.5)
}

/// UMZI POVM for splitters that send a fraction `s` into the short arm and
/// route a fraction `s` of the short arm to port 1.
pub fn umzi_povm_with_ratio(phase: f64, s: f64) -> [PovmElement; 6] {
    let short = s.sqrt();
    let long = (1.0 - s).sqrt();
    // Second splitter: short arm reaches port 1 with √s and port 2 with
    // √(1-s); long arm reaches port 1 with √(1-s) and port 2 with -√s.
    let out_short = |port: Port| if port == Port::One { short } else { long };
    let out_long = |port: Port| if port == Port::One { long } else { -short };
    let zero = C64::new(0.0, 0.0);
    let mut out = [PovmElement {
        port: Port::One,
        slot: Slot::Early,
        vector: [zero; 2],
    }; 6];
    for port in Port::ALL {
        let early = [C64::new(short * out_short(port), 0.0), zero];
        let late = [zero, C64::new(long * out_long(port), 0.0)];
        // |e⟩ through the long arm meets |l⟩ through the short arm.
        let mut e = long * out_long(port);
        let mut l = short * out_short(port);
        if e < 0.0 {
            e = -e;
            l = -l;
        }
        let middle = [C64::new(e, 0.0), C64::from_polar(l, -phase)];
        for (slot, vector) in [(Slot::Early, early), (Slot::Middle, middle), (Slot::Late, late)] {
            out[outcome_index(port, slot)] = PovmElement { port, slot, vector };
        }
    }
    out
}

/// Joint outcome probabilities `P[idler_outcome][signal_outcome]`, outcomes
/// indexed by [`outcome_index`].
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct JointTable(pub [[f64; 6]; 6]);

impl JointTable {
    pub fn get(&self, idler: (Port, Slot), signal: (Port, Slot)) -> f64 {
        self.0[outcome_index(idler.0, idler.1)][outcome_index(signal.0, signal.1)]
    }

    pub fn total(&self) -> f64 {
        self.0.iter().flat_map(|r| r.iter()).sum()
    }

    /// Middle-middle entries for the four port combinations, ordered
    /// `(A1B1, A1B2, A2B1, A2B2)`.
    pub fn middle_ports(&self) -> [f64; 4] {
        let m = Slot::Middle;
        [
            self.get((Port::One, m), (Port::One, m)),
            self.get((Port::One, m), (Port::Two, m)),
            self.get((Port::Two, m), (Port::One, m)),
            self.get((Port::Two, m), (Port::Two, m)),
        ]
    }
}

/// `tr[ρ (E_idler ⊗ E_signal)]` for every pair of outcomes.
pub fn project_pair_with(rho: &TwoQubitState, idler: &[PovmElement; 6], signal: &[PovmElement; 6]) -> JointTable {
    let mut t = [[0.0; 6]; 6];
    for a in idler {
        for b in signal {
            let op = a.operator().kron(&b.operator());
            t[a.outcome()][b.outcome()] = rho.matrix().trace_product(&op).re.max(0.0);
        }
    }
    JointTable(t)
}

/// Joint slot/port probabilities for idler phase `α` and signal phase `β`.
pub fn project_pair(rho: &TwoQubitState, alpha: f64, beta: f64) -> JointTable {
    project_pair_with(rho, &umzi_povm(alpha), &umzi_povm(beta))
}

/// Joint outcome probabilities for a pure pair, `|⟨a⊗b|ψ⟩|²`.
pub fn project_ket(psi: &TwoQubitKet, idler: &[PovmElement; 6], signal: &[PovmElement; 6]) -> [[f64; 6]; 6] {
    let amp = psi.amplitudes();
    let mut t = [[0.0; 6]; 6];
    for a in idler {
        for b in signal {
            let mut z = C64::new(0.0, 0.0);
            for i in 0..2 {
                for j in 0..2 {
                    z += (a.vector[i] * b.vector[j]).conj() * amp[2 * i + j];
                }
            }
            t[a.outcome()][b.outcome()] = z.norm_sqr();
        }
    }
    t
}

#[derive(Clone, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(deny_unknown_fields))]
pub struct DetectorConfig {
    pub efficiency: f64,
    pub dark_count_rate_hz: f64,
    pub jitter_sigma_ps: f64,
}

impl Default for DetectorConfig {
    fn default() -> Self {
        DetectorConfig {
            efficiency: 0.70,
            dark_count_rate_hz: 10.0,
            jitter_sigma_ps: 50.0,
        }
    }
}

impl DetectorConfig {
    pub fn validate(&self) -> Result<(), Error> {
        if !(self.efficiency > 0.0 && self.efficiency <= 1.0) {
            return Err(Error::InvalidParameter {
                name: "detector.efficiency",
                reason: String::from("must lie in (0, 1]"),
            });
        }
        if !(self.dark_count_rate_hz >= 0.0) {
            return Err(Error::InvalidParameter {
                name: "detector.dark_count_rate_hz",
                reason: String::from("must be nonnegative"),
            });
        }
        if !(self.jitter_sigma_ps >= 0.0) {
            return Err(Error::InvalidParameter {
                name: "detector.jitter_sigma_ps",
                reason: String::from("must be nonnegative"),
            });
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(deny_unknown_fields))]
pub struct CoincidenceConfig {
    pub window_ps: f64,
    pub histogram_bin_ps: f64,
}

impl Default for CoincidenceConfig {
    fn default() -> Self {
        CoincidenceConfig {
            window_ps: 600.0,
            histogram_bin_ps: 100.0,
        }
    }
}

impl CoincidenceConfig {
    pub fn validate(&self) -> Result<(), Error> {
        if !(self.histogram_bin_ps > 0.0 && self.window_ps >= self.histogram_bin_ps) {
            return Err(Error::InvalidParameter {
                name: "coincidence",
                reason: String::from("need window_ps >= histogram_bin_ps > 0"),
            });
        }
        Ok(())
    }
}

/// Detector names: `A1`, `A2` on the idler analyzer, `B1`, `B2` on the signal.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub enum DetectorId {
    A1,
    A2,
    B1,
    B2,
}

impl DetectorId {
    pub fn idler(port: Port) -> Self {
        match port {
            Port::One => DetectorId::A1,
            Port::Two => DetectorId::A2,
        }
    }

    pub fn signal(port: Port) -> Self {
        match port {
            Port::One => DetectorId::B1,
            Port::Two => DetectorId::B2,
        }
    }

    pub fn port(self) -> Port {
        match self {
            DetectorId::A1 | DetectorId::B1 => Port::One,
            DetectorId::A2 | DetectorId::B2 => Port::Two,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            DetectorId::A1 => "A1",
            DetectorId::A2 => "A2",
            DetectorId::B1 => "B1",
            DetectorId::B2 => "B2",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "A1" => Some(DetectorId::A1),
            "A2" => Some(DetectorId::A2),
            "B1" => Some(DetectorId::B1),
            "B2" => Some(DetectorId::B2),
            _ => None,
        }
    }
}

impl fmt::Display for DetectorId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// A photon reaching a detector, before detection losses.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PhotonArrival {
    pub detector: DetectorId,
    pub time_ps: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord)]
pub struct DetectionEvent {
    pub timestamp_ps: u64,
    pub detector: DetectorId,
}

/// Applies efficiency, Gaussian jitter and Poisson dark counts (on each of
/// `dark_detectors`, uniform over `[0, duration_s)`). Output is sorted.
pub fn detect(
    arrivals: &[PhotonArrival],
    dark_detectors: &[DetectorId],
    det: &DetectorConfig,
    duration_s: f64,
    seed: u64,
) -> Result<Vec<DetectionEvent>, Error> {
    det.validate()?;
    if !(duration_s > 0.0) {
        return Err(Error::InvalidParameter {
            name: "duration_s",
            reason: String::from("must be positive"),
        });
    }
    let mut rng = rng_from_seed(seed);
    let jitter = Normal::new(0.0, det.jitter_sigma_ps).map_err(|_| Error::InvalidParameter {
        name: "detector.jitter_sigma_ps",
        reason: String::from("invalid"),
    })?;
    let mut out = Vec::with_capacity(arrivals.len());
    for a in arrivals {
        if det.efficiency < 1.0 && rng.random::<f64>() >= det.efficiency {
            continue;
        }
        let t = if det.jitter_sigma_ps > 0.0 {
            a.time_ps + jitter.sample(&mut rng)
        } else {
            a.time_ps
        };
        out.push(DetectionEvent {
            timestamp_ps: t.max(0.0).round() as u64,
            detector: a.detector,
        });
    }
    if det.dark_count_rate_hz > 0.0 {
        let span_ps = duration_s * 1e12;
        let mean = det.dark_count_rate_hz * duration_s;
        let law = Poisson::new(mean).map_err(|_| Error::InvalidParameter {
            name: "detector.dark_count_rate_hz",
            reason: String::from("invalid Poisson mean"),
        })?;
        for &d in dark_detectors {
            let n = law.sample(&mut rng) as u64;
            for _ in 0..n {
                out.push(DetectionEvent {
                    timestamp_ps: (rng.random::<f64>() * span_ps) as u64,
                    detector: d,
                });
            }
        }
    }
    out.sort_unstable();
    Ok(out)
}

fn check_sorted(stream: &[DetectionEvent]) -> Result<(), Error> {
    match stream.windows(2).position(|w| w[1].timestamp_ps < w[0].timestamp_ps) {
        Some(i) => Err(Error::UnsortedStream { index: i + 1 }),
        None => Ok(()),
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Histogram {
    pub bin_width_ps: f64,
    /// `(bin_center_ps, count)`, ascending.
    pub bins: Vec<(f64, u64)>,
}

impl Histogram {
    pub fn total(&self) -> u64 {
        self.bins.iter().map(|b| b.1).sum()
    }

    pub fn count_near(&self, center_ps: f64, half_width_ps: f64) -> u64 {
        self.bins
            .iter()
            .filter(|(c, _)| (c - center_ps).abs() <= half_width_ps)
            .map(|b| b.1)
            .sum()
    }
}

/// Histogram of `t_b - t_a - offset_ps` over `±span_ns`, bins of
/// `cfg.histogram_bin_ps` centered on multiples of the bin width.
pub fn coincidence_histogram(
    stream_a: &[DetectionEvent],
    stream_b: &[DetectionEvent],
    cfg: &CoincidenceConfig,
    span_ns: f64,
    offset_ps: f64,
) -> Result<Histogram, Error> {
    cfg.validate()?;
    check_sorted(stream_a)?;
    check_sorted(stream_b)?;
    let bin = cfg.histogram_bin_ps;
    let span_ps = span_ns * 1e3;
    let half_bins = (span_ps / bin).floor() as i64;
    let n_bins = (2 * half_bins + 1) as usize;
    let mut counts = alloc::vec![0u64; n_bins];
    let reach = (half_bins as f64 + 0.5) * bin;
    let mut start = 0usize;
    for a in stream_a {
        let ta = a.timestamp_ps as f64 + offset_ps;
        while start < stream_b.len() && (stream_b[start].timestamp_ps as f64) < ta - reach {
            start += 1;
        }
        let mut j = start;
        while j < stream_b.len() {
            let dt = stream_b[j].timestamp_ps as f64 - ta;
            if dt >= reach {
                break;
            }
            let k = (dt / bin).round() as i64 + half_bins;
            if (0..n_bins as i64).contains(&k) {
                counts[k as usize] += 1;
            }
            j += 1;
        }
    }
    let bins = counts
        .into_iter()
        .enumerate()
        .map(|(k, c)| ((k as i64 - half_bins) as f64 * bin, c))
        .collect();
    Ok(Histogram { bin_width_ps: bin, bins })
}

/// Clock reference for one side of the experiment: a detection at time `t`
/// belongs to cycle `floor((t - offset)/period)` and its residual is
/// compared to the slot centers `{0, Δ, 2Δ}`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ClockFrame {
    pub period_ps: f64,
    pub offset_ps: f64,
    pub slot_spacing_ps: f64,
}

/// A detection assigned to a clock cycle and time slot.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ClassifiedEvent {
    pub cycle: u64,
    pub slot: Slot,
    pub port: Port,
}

/// Assigns each detection to `(cycle, slot)`; returns the classified events
/// and the number left unclassified (further than `window/2` from every
/// slot center).
pub fn classify(stream: &[DetectionEvent], frame: &ClockFrame, window_ps: f64) -> (Vec<ClassifiedEvent>, u64) {
    let half = 0.5 * window_ps;
    // Centering the cycle boundary between the late slot and the next
    // cycle's early slot keeps all three slots in one cycle.
    let guard = 0.5 * (frame.period_ps - 2.0 * frame.slot_spacing_ps);
    let mut out = Vec::with_capacity(stream.len());
    let mut unclassified = 0;
    for e in stream {
        let t = e.timestamp_ps as f64 - frame.offset_ps + guard;
        if t < 0.0 {
            unclassified += 1;
            continue;
        }
        let cycle = (t / frame.period_ps).floor();
        let residual = t - cycle * frame.period_ps - guard;
        let k = (residual / frame.slot_spacing_ps).round();
        if !(0.0..=2.0).contains(&k) || (residual - k * frame.slot_spacing_ps).abs() > half {
            unclassified += 1;
            continue;
        }
        out.push(ClassifiedEvent {
            cycle: cycle as u64,
            slot: Slot::from_index(k as usize),
            port: e.detector.port(),
        });
    }
    (out, unclassified)
}

/// Clock-triggered three-fold coincidence counts.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct ThreefoldCounts {
    /// `cells[slot_i][slot_s][port_i][port_s]`
    pub cells: [[[[u64; 2]; 2]; 3]; 3],
    pub unclassified_idler: u64,
    pub unclassified_signal: u64,
}

impl ThreefoldCounts {
    pub fn get(&self, slot_i: Slot, slot_s: Slot, port_i: Port, port_s: Port) -> u64 {
        self.cells[slot_i.index()][slot_s.index()][port_i.index()][port_s.index()]
    }

    /// Middle-middle counts `(A1B1, A1B2, A2B1, A2B2)`.
    pub fn middle_ports(&self) -> [u64; 4] {
        let m = Slot::Middle;
        [
            self.get(m, m, Port::One, Port::One),
            self.get(m, m, Port::One, Port::Two),
            self.get(m, m, Port::Two, Port::One),
            self.get(m, m, Port::Two, Port::Two),
        ]
    }

    /// The 3×3 slot table for one port pair.
    pub fn slot_table(&self, port_i: Port, port_s: Port) -> [[u64; 3]; 3] {
        let mut t = [[0; 3]; 3];
        for (si, row) in t.iter_mut().enumerate() {
            for (ss, cell) in row.iter_mut().enumerate() {
                *cell = self.cells[si][ss][port_i.index()][port_s.index()];
            }
        }
        t
    }

    pub fn total(&self) -> u64 {
        self.cells.iter().flatten().flatten().flatten().sum()
    }

    pub fn merge(&mut self, other: &ThreefoldCounts) {
        for a in 0..3 {
            for b in 0..3 {
                for c in 0..2 {
                    for d in 0..2 {
                        self.cells[a][b][c][d] += other.cells[a][b][c][d];
                    }
                }
            }
        }
        self.unclassified_idler += other.unclassified_idler;
        self.unclassified_signal += other.unclassified_signal;
    }
}

fn check_frames(idler: &ClockFrame, signal: &ClockFrame) -> Result<(), Error> {
    for f in [idler, signal] {
        if !(f.period_ps > 2.0 * f.slot_spacing_ps && f.slot_spacing_ps > 0.0) {
            return Err(Error::InvalidParameter {
                name: "clock frame",
                reason: String::from("period must exceed two slot spacings"),
            });
        }
    }
    if (idler.period_ps - signal.period_ps).abs() > 1e-6 {
        return Err(Error::InvalidParameter {
            name: "clock frame",
            reason: String::from("idler and signal clocks must share the period"),
        });
    }
    Ok(())
}

/// Counts idler/signal detection pairs that fall in the same clock cycle,
/// each within `window/2` of a slot center, per `(slot, port)` cell.
pub fn threefold_counts(
    idler: &[DetectionEvent],
    signal: &[DetectionEvent],
    idler_frame: &ClockFrame,
    signal_frame: &ClockFrame,
    cfg: &CoincidenceConfig,
) -> Result<ThreefoldCounts, Error> {
    cfg.validate()?;
    check_sorted(idler)?;
    check_sorted(signal)?;
    check_frames(idler_frame, signal_frame)?;
    let (ci, ui) = classify(idler, idler_frame, cfg.window_ps);
    let (cs, us) = classify(signal, signal_frame, cfg.window_ps);
    let mut counts = ThreefoldCounts {
        unclassified_idler: ui,
        unclassified_signal: us,
        ..ThreefoldCounts::default()
    };
    join_by_cycle(&ci, &cs, |a, b| {
        counts.cells[a.slot.index()][b.slot.index()][a.port.index()][b.port.index()] += 1;
    });
    Ok(counts)
}

/// Calls `f` for every idler/signal pair sharing a cycle. Both inputs are
/// cycle-ordered (they come from time-sorted streams).
fn join_by_cycle(a: &[ClassifiedEvent], b: &[ClassifiedEvent], mut f: impl FnMut(&ClassifiedEvent, &ClassifiedEvent)) {
    let mut j = 0usize;
    let mut i = 0usize;
    while i < a.len() && j < b.len() {
        let c = a[i].cycle;
        if b[j].cycle < c {
            j += 1;
            continue;
        }
        if b[j].cycle > c {
            i += 1;
            continue;
        }
        let i_end = i + a[i..].iter().take_while(|e| e.cycle == c).count();
        let j_end = j + b[j..].iter().take_while(|e| e.cycle == c).count();
        for x in &a[i..i_end] {
            for y in &b[j..j_end] {
                f(x, y);
            }
        }
        i = i_end;
        j = j_end;
    }
}

/// Per-cycle tallies for the cross-correlation `g²`.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct CoincidenceTally {
    pub cycles: u64,
    pub signal_cycles: u64,
    pub idler_cycles: u64,
    pub coincidence_cycles: u64,
}

/// Counts cycles with at least one classified click on each side and on
/// both sides.
pub fn tally_cycles(
    idler: &[DetectionEvent],
    signal: &[DetectionEvent],
    idler_frame: &ClockFrame,
    signal_frame: &ClockFrame,
    window_ps: f64,
    cycles: u64,
) -> Result<CoincidenceTally, Error> {
    check_sorted(idler)?;
    check_sorted(signal)?;
    check_frames(idler_frame, signal_frame)?;
    let dedup = |v: Vec<ClassifiedEvent>| {
        let mut cyc: Vec<u64> = v.into_iter().map(|e| e.cycle).filter(|&c| c < cycles).collect();
        cyc.dedup();
        cyc
    };
    let ci = dedup(classify(idler, idler_frame, window_ps).0);
    let cs = dedup(classify(signal, signal_frame, window_ps).0);
    let mut both = 0u64;
    let (mut i, mut j) = (0, 0);
    while i < ci.len() && j < cs.len() {
        match ci[i].cmp(&cs[j]) {
            core::cmp::Ordering::Less => i += 1,
            core::cmp::Ordering::Greater => j += 1,
            core::cmp::Ordering::Equal => {
                both += 1;
                i += 1;
                j += 1;
            }
        }
    }
    Ok(CoincidenceTally {
        cycles,
        signal_cycles: cs.len() as u64,
        idler_cycles: ci.len() as u64,
        coincidence_cycles: both,
    })
}

/// `g² = P_si / (P_s · P_i)` from per-cycle tallies.
pub fn g2_cross(tally: &CoincidenceTally) -> Result<f64, Error> {
    if tally.signal_cycles == 0 || tally.idler_cycles == 0 || tally.cycles == 0 {
        return Err(Error::NoCounts("g2 needs nonzero signal and idler singles"));
    }
    let n = tally.cycles as f64;
    let p_si = tally.coincidence_cycles as f64 / n;
    let p_s = tally.signal_cycles as f64 / n;
    let p_i = tally.idler_cycles as f64 / n;
    Ok(p_si / (p_s * p_i))
}

/// Poisson error on `g²` from the three tallies, propagated to first order.
pub fn g2_sigma(tally: &CoincidenceTally) -> Result<f64, Error> {
    let g = g2_cross(tally)?;
    let inv = |x: u64| if x == 0 { 0.0 } else { 1.0 / x as f64 };
    Ok(g * (inv(tally.coincidence_cycles) + inv(tally.signal_cycles) + inv(tally.idler_cycles)).sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::CMat2;
    use crate::quantum::{bell_psi_plus, TimeBinKet};
    use core::f64::consts::{FRAC_1_SQRT_2, FRAC_PI_2, PI};

    fn single_photon_probs(povm: &[PovmElement; 6], ket: &TimeBinKet) -> [f64; 6] {
        let mut p = [0.0; 6];
        for e in povm {
            let a = ket.amplitudes();
            let z = e.vector[0].conj() * a[0] + e.vector[1].conj() * a[1];
            p[e.outcome()] = z.norm_sqr();
        }
        p
    }

    #[test]
    fn povm_is_complete() {
        for phi in [0.0, 0.3, FRAC_PI_2, PI, -2.0] {
            let sum = umzi_povm(phi)
                .iter()
                .fold(CMat2::zeros(), |acc, e| acc + e.operator());
            let id = CMat2::identity();
            for r in 0..2 {
                for c in 0..2 {
                    assert!((sum.0[r][c] - id.0[r][c]).norm() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn povm_middle_vectors_have_documented_form() {
        let phi = 0.7;
        let povm = umzi_povm(phi);
        let m1 = povm[outcome_index(Port::One, Slot::Middle)].vector;
        let m2 = povm[outcome_index(Port::Two, Slot::Middle)].vector;
        // ¼|u±⟩⟨u±| ⇔ v = ½(1, ±e^{-iφ})
        assert!((m1[0] - C64::new(0.5, 0.0)).norm() < 1e-15);
        assert!((m1[1] - C64::from_polar(0.5, -phi)).norm() < 1e-15);
        assert!((m2[0] - C64::new(0.5, 0.0)).norm() < 1e-15);
        assert!((m2[1] + C64::from_polar(0.5, -phi)).norm() < 1e-15);
    }

    #[test]
    fn early_photon_distribution() {
        let p = single_photon_probs(&umzi_povm(1.1), &TimeBinKet::early());
        for port in Port::ALL {
            assert!((p[outcome_index(port, Slot::Early)] - 0.25).abs() < 1e-15);
            assert!((p[outcome_index(port, Slot::Middle)] - 0.25).abs() < 1e-15);
            assert!(p[outcome_index(port, Slot::Late)].abs() < 1e-15);
        }
    }

    #[test]
    fn diagonal_photon_interferes() {
        let p = single_photon_probs(&umzi_povm(0.0), &TimeBinKet::diagonal());
        assert!((p[outcome_index(Port::One, Slot::Middle)] - 0.5).abs() < 1e-15);
        assert!(p[outcome_index(Port::Two, Slot::Middle)].abs() < 1e-15);
    }

    #[test]
    fn franson_middle_middle_law() {
        let rho = bell_psi_plus().projector();
        for k in 0..16 {
            let theta = k as f64 * PI / 8.0;
            let t = project_pair(&rho, theta * 0.3, theta * 0.7);
            let m = t.middle_ports();
            let expect = (1.0 + theta.cos()) / 16.0;
            assert!((m[0] - expect).abs() < 1e-12);
            assert!((m[3] - expect).abs() < 1e-12);
            assert!((m[1] - (1.0 - theta.cos()) / 16.0).abs() < 1e-12);
            assert!((t.total() - 1.0).abs() < 1e-12);
        }
        let t = project_pair(&rho, 0.0, FRAC_PI_2);
        let m = t.middle_ports();
        assert!((m[0] - m[1]).abs() < 1e-15);
    }

    #[test]
    fn maximally_mixed_middle_cells_equal() {
        let t = project_pair(&TwoQubitState::maximally_mixed(), 0.4, -1.3);
        let m = t.middle_ports();
        for x in m {
            assert!((x - m[0]).abs() < 1e-15);
        }
    }

    #[test]
    fn pure_ket_route_matches_density_route() {
        let psi = bell_psi_plus();
        let a = umzi_povm(0.2);
        let b = umzi_povm(-1.0);
        let via_ket = project_ket(&psi, &a, &b);
        let via_rho = project_pair_with(&psi.projector(), &a, &b);
        for i in 0..6 {
            for j in 0..6 {
                assert!((via_ket[i][j] - via_rho.0[i][j]).abs() < 1e-14);
            }
        }
    }

    #[test]
    fn unbalanced_splitter_stays_complete() {
        let sum = umzi_povm_with_ratio(0.9, 0.3)
            .iter()
            .fold(CMat2::zeros(), |acc, e| acc + e.operator());
        assert!((sum.0[0][0].re - 1.0).abs() < 1e-12);
        assert!((sum.0[1][1].re - 1.0).abs() < 1e-12);
        assert!(sum.0[0][1].norm() < 1e-12);
        let _ = FRAC_1_SQRT_2;
    }

    #[test]
    fn umzi_delay_must_match_pulse_interval() {
        assert!(UmziConfig::default().validate(1.25).is_ok());
        let u = UmziConfig {
            arm_delay_ns: 1.252,
            ..UmziConfig::default()
        };
        assert!(u.validate(1.25).is_err());
    }

    #[test]
    fn perfect_detector_is_identity() {
        let arrivals: Vec<PhotonArrival> = (0..100)
            .map(|k| PhotonArrival {
                detector: if k % 2 == 0 { DetectorId::A1 } else { DetectorId::B2 },
                time_ps: 1000.0 * k as f64,
            })
            .collect();
        let det = DetectorConfig {
            efficiency: 1.0,
            dark_count_rate_hz: 0.0,
            jitter_sigma_ps: 0.0,
        };
        let out = detect(&arrivals, &[DetectorId::A1], &det, 1.0, 1).unwrap();
        assert_eq!(out.len(), 100);
        for (a, e) in arrivals.iter().zip(&out) {
            assert_eq!(a.time_ps as u64, e.timestamp_ps);
            assert_eq!(a.detector, e.detector);
        }
    }

    #[test]
    fn histogram_of_identical_streams_peaks_at_zero() {
        let s: Vec<DetectionEvent> = (0..50)
            .map(|k| DetectionEvent {
                timestamp_ps: 100_000 * k,
                detector: DetectorId::A1,
            })
            .collect();
        let h = coincidence_histogram(&s, &s, &CoincidenceConfig::default(), 5.0, 0.0).unwrap();
        assert_eq!(h.total(), 50);
        assert_eq!(h.count_near(0.0, 1.0), 50);
    }

    #[test]
    fn unsorted_stream_rejected() {
        let s = [
            DetectionEvent {
                timestamp_ps: 10,
                detector: DetectorId::A1,
            },
            DetectionEvent {
                timestamp_ps: 5,
                detector: DetectorId::A1,
            },
        ];
        assert!(matches!(
            coincidence_histogram(&s, &s, &CoincidenceConfig::default(), 1.0, 0.0),
            Err(Error::UnsortedStream { index: 1 })
        ));
        let frame = ClockFrame {
            period_ps: 16_000.0,
            offset_ps: 0.0,
            slot_spacing_ps: 1250.0,
        };
        assert!(threefold_counts(&s, &s, &frame, &frame, &CoincidenceConfig::default()).is_err());
    }

    #[test]
    fn slot_centers_are_classified() {
        let frame = ClockFrame {
            period_ps: 16_000.0,
            offset_ps: 3_000.0,
            slot_spacing_ps: 1250.0,
        };
        let mut s = Vec::new();
        for cycle in 0..10u64 {
            for slot in 0..3u64 {
                s.push(DetectionEvent {
                    timestamp_ps: 3_000 + cycle * 16_000 + slot * 1250,
                    detector: DetectorId::A2,
                });
            }
        }
        let (c, un) = classify(&s, &frame, 600.0);
        assert_eq!(un, 0);
        assert_eq!(c.len(), 30);
        assert_eq!(c[4].cycle, 1);
        assert_eq!(c[4].slot, Slot::Middle);
        assert_eq!(c[4].port, Port::Two);
        // 400 ps away from every center: unclassified
        let off = [DetectionEvent {
            timestamp_ps: 3_000 + 1250 + 625,
            detector: DetectorId::A1,
        }];
        assert_eq!(classify(&off, &frame, 600.0).1, 1);
    }

    #[test]
    fn g2_edge_cases() {
        let t = CoincidenceTally {
            cycles: 1000,
            signal_cycles: 0,
            idler_cycles: 10,
            coincidence_cycles: 0,
        };
        assert!(g2_cross(&t).is_err());
        let t = CoincidenceTally {
            cycles: 1_000_000,
            signal_cycles: 1000,
            idler_cycles: 1000,
            coincidence_cycles: 1,
        };
        assert!((g2_cross(&t).unwrap() - 1.0).abs() < 1e-12);
    }
}
