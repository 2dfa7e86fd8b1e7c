use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, Mutex};

use crate::error::{Error, Result};
use crate::motion::Motion;
use crate::protocol::ExternalClassifier;

use super::model::ClassifierModel;

#[derive(Debug, Clone)]
enum Backend {
    Builtin(Arc<ClassifierModel>),
    External(Arc<Mutex<ExternalClassifier>>),
}

/// Hard-label access to a classifier with an exact query count.
///
/// The counter is per handle. [`ClassifierHandle::fork`] returns a handle on
/// the same classifier with a fresh counter, which is how batch attacks
/// account queries per run while sharing one model or one server process.
#[derive(Debug)]
pub struct ClassifierHandle {
    backend: Backend,
    n_frames: usize,
    dofs: usize,
    classes: usize,
    queries: AtomicU64,
}

impl ClassifierHandle {
    pub fn builtin(model: impl Into<Arc<ClassifierModel>>) -> Self {
        let model = model.into();
        Self {
            n_frames: model.n_frames(),
            dofs: model.dofs(),
            classes: model.classes(),
            backend: Backend::Builtin(model),
            queries: AtomicU64::new(0),
        }
    }

    /// Spawns `command` as a line-protocol server (see [`crate::protocol`]).
    pub fn external(command: &str) -> Result<Self> {
        let ext = ExternalClassifier::spawn(command)?;
        let info = ext.info();
        Ok(Self {
            n_frames: info.frames,
            dofs: info.dofs,
            classes: info.classes,
            backend: Backend::External(Arc::new(Mutex::new(ext))),
            queries: AtomicU64::new(0),
        })
    }

    pub fn fork(&self) -> Self {
        Self {
            backend: self.backend.clone(),
            n_frames: self.n_frames,
            dofs: self.dofs,
            classes: self.classes,
            queries: AtomicU64::new(0),
        }
    }

    pub fn n_frames(&self) -> usize {
        self.n_frames
    }

    pub fn dofs(&self) -> usize {
        self.dofs
    }

    pub fn classes(&self) -> usize {
        self.classes
    }

    /// Number of label queries answered through this handle so far.
    pub fn queries(&self) -> u64 {
        self.queries.load(Ordering::SeqCst)
    }

    pub fn is_external(&self) -> bool {
        matches!(self.backend, Backend::External(_))
    }

    /// White-box access, available for built-in models only.
    pub fn model(&self) -> Result<&ClassifierModel> {
        match &self.backend {
            Backend::Builtin(m) => Ok(m),
            Backend::External(_) => Err(Error::Capability(
                "scores and gradients are not exposed by external classifiers".into(),
            )),
        }
    }

    /// The predicted label. Shape errors are returned before the counter
    /// moves; every other call counts as one query.
    pub fn predict_label(&self, motion: &Motion) -> Result<usize> {
        if motion.n_frames() != self.n_frames || motion.dofs() != self.dofs {
            return Err(Error::DimensionMismatch(format!(
                "classifier expects {}x{}, got {}x{}",
                self.n_frames,
                self.dofs,
                motion.n_frames(),
                motion.dofs()
            )));
        }
        match &self.backend {
            Backend::Builtin(m) => {
                m.check_input(motion)?;
                self.queries.fetch_add(1, Ordering::SeqCst);
                m.predict(motion)
            }
            Backend::External(ext) => {
                self.queries.fetch_add(1, Ordering::SeqCst);
                ext.lock()
                    .map_err(|_| Error::Protocol("external classifier lock poisoned".into()))?
                    .query(motion)
            }
        }
    }
}
