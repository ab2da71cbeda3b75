//! Thread-safe intake pool: submitters and the matching loop share one
//! queue and one sequencer.

use std::sync::{Arc, Mutex, MutexGuard};

use fdrm_core::{ActivePool, Intake, IntakeError, Request, RequestId, Sequencer, Thresholds};

#[derive(Clone, Debug, Default)]
pub struct SharedPool {
    inner: Arc<Mutex<ActivePool>>,
    seq: Arc<Sequencer>,
}

impl SharedPool {
    pub fn new() -> Self {
        Self::default()
    }

    fn lock(&self) -> MutexGuard<'_, ActivePool> {
        self.inner.lock().unwrap_or_else(|e| e.into_inner())
    }

    /// Validates, splits and queues `raw`. Safe to call while another
    /// thread drains.
    pub fn submit(&self, raw: Request, th: &Thresholds) -> Result<Vec<RequestId>, IntakeError> {
        self.lock().submit_request(raw, &self.seq, th)
    }

    pub fn sequencer(&self) -> &Sequencer {
        &self.seq
    }

    pub fn len(&self) -> usize {
        self.lock().len()
    }

    pub fn is_empty(&self) -> bool {
        self.lock().is_empty()
    }
}

impl Intake for SharedPool {
    fn reinsert(&mut self, request: Request) -> bool {
        self.lock().reinsert(request)
    }

    fn drain_snapshot(&mut self) -> Vec<Request> {
        self.lock().drain_snapshot()
    }

    fn is_empty(&self) -> bool {
        self.lock().is_empty()
    }

    fn contains(&self, id: RequestId) -> bool {
        self.lock().contains(id)
    }
}
