//! Synthetic continual-learning task sequences and the rehearsal memory.
//!
//! Every task shares one Gaussian-mixture base problem (one mean per class,
//! isotropic noise). Task 1 sees the base problem directly; every later task
//! sees it through its own seeded feature transform, so tasks compete for the
//! same parameters and sequential training forgets.

use alloc::collections::BTreeMap;
use alloc::vec::Vec;

use rand::seq::{index, SliceRandom};
use rand::Rng as _;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::rng::{self, Rng, Stream};
use crate::trainer::Batch;

#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub input: Vec<f64>,
    pub label: usize,
}

impl Sample {
    pub fn new(input: Vec<f64>, label: usize) -> Self {
        Sample { input, label }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TaskDataset {
    /// 1-based task index.
    pub task_id: usize,
    pub train: Vec<Sample>,
    pub test: Vec<Sample>,
}

impl TaskDataset {
    pub fn n_train(&self) -> usize {
        self.train.len()
    }
}

/// How later tasks are derived from the base problem.
///
/// The meaning of [`SequenceSpec::interference_strength`] depends on the mode:
/// - `Rotation`: angle in radians applied in randomly paired coordinate planes.
/// - `Permutation`: fraction of feature coordinates that get shuffled
///   (0 gives the identity permutation).
/// - `MeanShift`: norm of a random per-class offset added to every input.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case"))]
pub enum InterferenceMode {
    Rotation,
    Permutation,
    MeanShift,
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct SequenceSpec {
    pub num_tasks: usize,
    pub input_dim: usize,
    pub classes_per_task: usize,
    /// Training samples per task (N_k).
    pub samples_per_task: usize,
    pub test_samples_per_task: usize,
    pub interference_mode: InterferenceMode,
    pub interference_strength: f64,
    /// Norm of every class mean in the base problem.
    pub class_separation: f64,
    pub noise_std: f64,
    pub seed: u64,
}

impl Default for SequenceSpec {
    fn default() -> Self {
        SequenceSpec {
            num_tasks: 4,
            input_dim: 16,
            classes_per_task: 4,
            samples_per_task: 500,
            test_samples_per_task: 200,
            interference_mode: InterferenceMode::Rotation,
            interference_strength: core::f64::consts::FRAC_PI_2,
            class_separation: 3.0,
            noise_std: 1.0,
            seed: 0,
        }
    }
}

impl SequenceSpec {
    pub fn validate(&self) -> Result<()> {
        if self.num_tasks < 2 {
            return Err(Error::invalid("num_tasks", "need at least 2 tasks"));
        }
        if self.input_dim == 0 || self.samples_per_task == 0 || self.test_samples_per_task == 0 {
            return Err(Error::invalid(
                "sequence spec",
                "input_dim and sample counts must be positive",
            ));
        }
        if self.classes_per_task < 2 {
            return Err(Error::invalid("classes_per_task", "need at least 2 classes"));
        }
        let finite_nonneg = |v: f64| v.is_finite() && v >= 0.0;
        if !finite_nonneg(self.interference_strength)
            || !finite_nonneg(self.class_separation)
            || !finite_nonneg(self.noise_std)
        {
            return Err(Error::invalid(
                "sequence spec",
                "strength, separation and noise must be finite and non-negative",
            ));
        }
        if self.interference_mode == InterferenceMode::Permutation
            && self.interference_strength > 1.0
        {
            return Err(Error::invalid(
                "interference_strength",
                "permutation strength is a fraction in [0, 1]",
            ));
        }
        Ok(())
    }
}

fn gaussian_vec(rng: &mut Rng, dim: usize) -> Vec<f64> {
    (0..dim).map(|_| StandardNormal.sample(rng)).collect()
}

fn with_norm(mut v: Vec<f64>, norm: f64) -> Vec<f64> {
    let n = libm::sqrt(v.iter().map(|x| x * x).sum::<f64>());
    if n > 0.0 {
        v.iter_mut().for_each(|x| *x *= norm / n);
    }
    v
}

enum Transform {
    Identity,
    /// Givens rotations on disjoint coordinate pairs.
    Rotation { pairs: Vec<(usize, usize)>, cos: f64, sin: f64 },
    Permutation(Vec<usize>),
    MeanShift(Vec<Vec<f64>>),
}

impl Transform {
    fn draw(spec: &SequenceSpec, rng: &mut Rng) -> Transform {
        let d = spec.input_dim;
        match spec.interference_mode {
            InterferenceMode::Rotation => {
                let mut order: Vec<usize> = (0..d).collect();
                order.shuffle(rng);
                let pairs = order.chunks_exact(2).map(|p| (p[0], p[1])).collect();
                Transform::Rotation {
                    pairs,
                    cos: libm::cos(spec.interference_strength),
                    sin: libm::sin(spec.interference_strength),
                }
            }
            InterferenceMode::Permutation => {
                let moved = libm::round(spec.interference_strength * d as f64) as usize;
                let mut perm: Vec<usize> = (0..d).collect();
                if moved >= 2 {
                    let chosen = index::sample(rng, d, moved.min(d)).into_vec();
                    let mut targets = chosen.clone();
                    targets.shuffle(rng);
                    for (src, dst) in chosen.iter().zip(&targets) {
                        perm[*src] = *dst;
                    }
                }
                Transform::Permutation(perm)
            }
            InterferenceMode::MeanShift => Transform::MeanShift(
                (0..spec.classes_per_task)
                    .map(|_| with_norm(gaussian_vec(rng, d), spec.interference_strength))
                    .collect(),
            ),
        }
    }

    fn apply(&self, x: &mut [f64], label: usize) {
        match self {
            Transform::Identity => {}
            Transform::Rotation { pairs, cos, sin } => {
                for &(i, j) in pairs {
                    let (a, b) = (x[i], x[j]);
                    x[i] = cos * a - sin * b;
                    x[j] = sin * a + cos * b;
                }
            }
            Transform::Permutation(perm) => {
                let src = x.to_vec();
                for (i, &p) in perm.iter().enumerate() {
                    x[i] = src[p];
                }
            }
            Transform::MeanShift(shifts) => {
                for (xi, s) in x.iter_mut().zip(&shifts[label]) {
                    *xi += s;
                }
            }
        }
    }
}

fn draw_split(
    spec: &SequenceSpec,
    means: &[Vec<f64>],
    transform: &Transform,
    n: usize,
    rng: &mut Rng,
) -> Vec<Sample> {
    let mut labels: Vec<usize> = (0..n).map(|i| i % spec.classes_per_task).collect();
    labels.shuffle(rng);
    labels
        .into_iter()
        .map(|label| {
            let mut x: Vec<f64> = means[label]
                .iter()
                .map(|m| {
                    let z: f64 = StandardNormal.sample(rng);
                    m + spec.noise_std * z
                })
                .collect();
            transform.apply(&mut x, label);
            Sample::new(x, label)
        })
        .collect()
}

/// Builds the whole task sequence; deterministic in `spec.seed`.
pub fn generate_sequence(spec: &SequenceSpec) -> Result<Vec<TaskDataset>> {
    spec.validate()?;
    let mut base_rng = rng::stream(spec.seed, Stream::Data);
    let means: Vec<Vec<f64>> = (0..spec.classes_per_task)
        .map(|_| with_norm(gaussian_vec(&mut base_rng, spec.input_dim), spec.class_separation))
        .collect();

    Ok((1..=spec.num_tasks)
        .map(|task_id| {
            let mut rng = rng::indexed_stream(spec.seed, Stream::Data, task_id as u64);
            let transform = if task_id == 1 {
                Transform::Identity
            } else {
                Transform::draw(spec, &mut rng)
            };
            let train = draw_split(spec, &means, &transform, spec.samples_per_task, &mut rng);
            let test = draw_split(spec, &means, &transform, spec.test_samples_per_task, &mut rng);
            TaskDataset {
                task_id,
                train,
                test,
            }
        })
        .collect())
}

/// Per-task rehearsal samples.
#[derive(Debug, Clone, PartialEq)]
pub struct MemoryBuffer {
    per_task: BTreeMap<usize, Vec<Sample>>,
    capacity_fraction: f64,
}

impl MemoryBuffer {
    pub fn new(capacity_fraction: f64) -> Result<Self> {
        if !(capacity_fraction > 0.0 && capacity_fraction <= 1.0) {
            return Err(Error::invalid("memory fraction", "must lie in (0, 1]"));
        }
        Ok(MemoryBuffer {
            per_task: BTreeMap::new(),
            capacity_fraction,
        })
    }

    pub fn capacity_fraction(&self) -> f64 {
        self.capacity_fraction
    }

    /// `ceil(fraction * n)`, tolerant of binary rounding in the product.
    pub fn slots_for(&self, n: usize) -> usize {
        let raw = self.capacity_fraction * n as f64;
        (libm::ceil(raw - 1e-9) as usize).clamp(1, n.max(1)).min(n)
    }

    pub fn is_empty(&self) -> bool {
        self.per_task.values().all(|v| v.is_empty())
    }

    pub fn len(&self) -> usize {
        self.per_task.values().map(Vec::len).sum()
    }

    pub fn task(&self, task_id: usize) -> Option<&[Sample]> {
        self.per_task.get(&task_id).map(Vec::as_slice)
    }

    pub fn task_ids(&self) -> impl Iterator<Item = usize> + '_ {
        self.per_task.keys().copied()
    }

    fn get(&self, mut i: usize) -> &Sample {
        for samples in self.per_task.values() {
            if i < samples.len() {
                return &samples[i];
            }
            i -= samples.len();
        }
        unreachable!("memory index out of range")
    }

    fn draw_batch(&self, batch_size: usize, rng: &mut Rng) -> Batch {
        let total = self.len();
        let picks: Vec<&Sample> = (0..batch_size)
            .map(|_| self.get(rng.random_range(0..total)))
            .collect();
        Batch::from_samples(picks).expect("stored samples share one input dimension")
    }
}

/// Stores a uniformly random subset of `ceil(fraction * N_k)` training samples
/// of `task`, replacing anything stored earlier under the same task id.
pub fn store_memory(buffer: &mut MemoryBuffer, task: &TaskDataset, rng: &mut Rng) {
    let n = task.n_train();
    let m = buffer.slots_for(n);
    let picked = index::sample(rng, n, m)
        .into_iter()
        .map(|i| task.train[i].clone())
        .collect();
    buffer.per_task.insert(task.task_id, picked);
}

/// `batch_size` draws, uniform with replacement over every stored sample.
/// `None` while the buffer is empty.
pub fn sample_probe(buffer: &MemoryBuffer, batch_size: usize, rng: &mut Rng) -> Option<Batch> {
    if buffer.is_empty() || batch_size == 0 {
        return None;
    }
    Some(buffer.draw_batch(batch_size, rng))
}

/// `steps` independent memory batches for rehearsal fine-tuning.
pub fn memory_training_batches(
    buffer: &MemoryBuffer,
    batch_size: usize,
    steps: usize,
    rng: &mut Rng,
) -> Result<Vec<Batch>> {
    if buffer.is_empty() {
        return Err(Error::invalid("memory buffer", "empty; rehearsal must be skipped"));
    }
    if batch_size == 0 {
        return Err(Error::invalid("batch_size", "must be at least 1"));
    }
    Ok((0..steps).map(|_| buffer.draw_batch(batch_size, rng)).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    fn small_spec(mode: InterferenceMode, strength: f64) -> SequenceSpec {
        SequenceSpec {
            num_tasks: 3,
            input_dim: 6,
            classes_per_task: 3,
            samples_per_task: 60,
            test_samples_per_task: 30,
            interference_mode: mode,
            interference_strength: strength,
            class_separation: 2.0,
            noise_std: 0.5,
            seed: 11,
        }
    }

    fn task_with(n: usize) -> TaskDataset {
        TaskDataset {
            task_id: 1,
            train: (0..n).map(|i| Sample::new(vec![i as f64], 0)).collect(),
            test: vec![],
        }
    }

    #[test]
    fn generation_is_deterministic() {
        let spec = small_spec(InterferenceMode::Rotation, 1.0);
        assert_eq!(generate_sequence(&spec).unwrap(), generate_sequence(&spec).unwrap());
        let other = SequenceSpec { seed: 12, ..spec.clone() };
        assert_ne!(generate_sequence(&spec).unwrap(), generate_sequence(&other).unwrap());
    }

    #[test]
    fn shapes_and_label_balance() {
        for mode in [
            InterferenceMode::Rotation,
            InterferenceMode::Permutation,
            InterferenceMode::MeanShift,
        ] {
            let strength = if mode == InterferenceMode::Permutation { 1.0 } else { 1.5 };
            let spec = small_spec(mode, strength);
            let tasks = generate_sequence(&spec).unwrap();
            assert_eq!(tasks.len(), 3);
            for (k, t) in tasks.iter().enumerate() {
                assert_eq!(t.task_id, k + 1);
                assert_eq!(t.train.len(), 60);
                assert_eq!(t.test.len(), 30);
                assert!(t.train.iter().chain(&t.test).all(|s| s.input.len() == 6));
                let expected = 60.0 / 3.0;
                for c in 0..3 {
                    let count = t.train.iter().filter(|s| s.label == c).count() as f64;
                    assert!((count - expected).abs() <= 0.2 * expected);
                }
            }
        }
    }

    #[test]
    fn identity_permutation_reproduces_task_one_distribution() {
        let spec = SequenceSpec {
            noise_std: 0.1,
            ..small_spec(InterferenceMode::Permutation, 0.0)
        };
        let tasks = generate_sequence(&spec).unwrap();
        // same base means and an identity map: per-class empirical means agree
        for c in 0..3 {
            let mean = |t: &TaskDataset| {
                let rows: Vec<&Sample> = t.train.iter().filter(|s| s.label == c).collect();
                (0..6)
                    .map(|j| rows.iter().map(|s| s.input[j]).sum::<f64>() / rows.len() as f64)
                    .collect::<Vec<_>>()
            };
            let (a, b) = (mean(&tasks[0]), mean(&tasks[2]));
            for j in 0..6 {
                assert!((a[j] - b[j]).abs() < 0.1, "class {c} coord {j}: {} vs {}", a[j], b[j]);
            }
        }
    }

    #[test]
    fn rotation_preserves_norms() {
        let spec = SequenceSpec {
            noise_std: 0.0,
            ..small_spec(InterferenceMode::Rotation, 0.7)
        };
        let tasks = generate_sequence(&spec).unwrap();
        let norm = |s: &Sample| libm::sqrt(s.input.iter().map(|x| x * x).sum::<f64>());
        for s in tasks[1].train.iter().take(10) {
            assert!((norm(s) - 2.0).abs() < 1e-12);
        }
        // and actually moves the inputs
        assert_ne!(tasks[0].train[0].input, tasks[1].train[0].input);
    }

    #[test]
    fn invalid_specs() {
        let ok = small_spec(InterferenceMode::Rotation, 1.0);
        assert!(SequenceSpec { num_tasks: 1, ..ok.clone() }.validate().is_err());
        assert!(SequenceSpec { classes_per_task: 1, ..ok.clone() }.validate().is_err());
        assert!(SequenceSpec { noise_std: f64::NAN, ..ok.clone() }.validate().is_err());
        assert!(small_spec(InterferenceMode::Permutation, 2.0).validate().is_err());
    }

    #[test]
    fn memory_sizes_use_ceiling() {
        let mut rng = rng::stream(1, Stream::Memory);
        let mut buf = MemoryBuffer::new(0.02).unwrap();
        store_memory(&mut buf, &task_with(500), &mut rng);
        assert_eq!(buf.task(1).unwrap().len(), 10);

        let mut full = MemoryBuffer::new(1.0).unwrap();
        let t = task_with(37);
        store_memory(&mut full, &t, &mut rng);
        let mut stored: Vec<f64> = full.task(1).unwrap().iter().map(|s| s.input[0]).collect();
        stored.sort_by(f64::total_cmp);
        assert_eq!(stored, (0..37).map(|i| i as f64).collect::<Vec<_>>());

        let mut half = MemoryBuffer::new(0.5).unwrap();
        store_memory(&mut half, &task_with(3), &mut rng);
        assert_eq!(half.task(1).unwrap().len(), 2);

        for f in [0.0, -0.1, 1.5, f64::NAN] {
            assert!(MemoryBuffer::new(f).is_err());
        }
    }

    #[test]
    fn stored_samples_are_distinct_members() {
        let mut rng = rng::stream(3, Stream::Memory);
        let mut buf = MemoryBuffer::new(0.1).unwrap();
        store_memory(&mut buf, &task_with(200), &mut rng);
        let mut vals: Vec<f64> = buf.task(1).unwrap().iter().map(|s| s.input[0]).collect();
        vals.sort_by(f64::total_cmp);
        vals.dedup();
        assert_eq!(vals.len(), 20);
    }

    #[test]
    fn probe_sampling() {
        let mut rng = rng::stream(2, Stream::Probe);
        let empty = MemoryBuffer::new(0.5).unwrap();
        assert!(sample_probe(&empty, 4, &mut rng).is_none());
        assert!(memory_training_batches(&empty, 4, 2, &mut rng).is_err());

        let mut one = MemoryBuffer::new(1.0).unwrap();
        store_memory(&mut one, &task_with(1), &mut rng);
        let b = sample_probe(&one, 4, &mut rng).unwrap();
        assert_eq!(b.len(), 4);
        assert!((0..4).all(|i| b.row(i) == [0.0]));
    }

    #[test]
    fn probe_draws_are_uniform_across_tasks() {
        let mut rng = rng::stream(5, Stream::Probe);
        let mut buf = MemoryBuffer::new(1.0).unwrap();
        let mut a = task_with(5);
        a.train.iter_mut().for_each(|s| s.label = 0);
        let mut b = task_with(5);
        b.task_id = 2;
        b.train.iter_mut().for_each(|s| s.label = 1);
        store_memory(&mut buf, &a, &mut rng);
        store_memory(&mut buf, &b, &mut rng);
        let batch = sample_probe(&buf, 10_000, &mut rng).unwrap();
        let freq = batch.labels().iter().filter(|&&l| l == 1).count() as f64 / 10_000.0;
        assert!((freq - 0.5).abs() <= 0.03, "{freq}");
    }

    #[test]
    fn training_batches() {
        let mut buf = MemoryBuffer::new(0.5).unwrap();
        store_memory(&mut buf, &task_with(20), &mut rng::stream(0, Stream::Memory));
        let mut r1 = rng::stream(9, Stream::Rehearsal);
        let mut r2 = rng::stream(9, Stream::Rehearsal);
        assert!(memory_training_batches(&buf, 8, 0, &mut r1).unwrap().is_empty());
        let a = memory_training_batches(&buf, 8, 3, &mut r1).unwrap();
        assert_eq!(a.len(), 3);
        assert!(a.iter().all(|b| b.len() == 8));
        let _ = memory_training_batches(&buf, 8, 0, &mut r2).unwrap();
        assert_eq!(a, memory_training_batches(&buf, 8, 3, &mut r2).unwrap());
    }
}
