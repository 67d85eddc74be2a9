use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Arc;

use super::{Endpoint, Runtime, RuntimeError};
use crate::roles::Group;
use crate::session_types::SessionType;

type Setup = Arc<dyn Fn(Endpoint) -> Result<(), RuntimeError> + Send + Sync>;

/// A reusable source of `chan(group, proto)` sessions. Each request spawns
/// one agent running the setup function on the `group` side.
#[derive(Clone)]
pub struct Service {
    rt: Runtime,
    group: Group,
    proto: SessionType,
    setup: Setup,
    requests: Arc<AtomicUsize>,
}

impl Service {
    pub(crate) fn new(rt: Runtime, group: Group, proto: SessionType, setup: Setup) -> Self {
        Service { rt, group, proto, setup, requests: Arc::new(AtomicUsize::new(0)) }
    }

    pub fn group(&self) -> Group {
        self.group
    }

    pub fn proto(&self) -> &SessionType {
        &self.proto
    }

    pub fn requests(&self) -> usize {
        self.requests.load(Ordering::Relaxed)
    }

    /// A fresh session; the caller gets the complement side.
    pub fn request(&self) -> Endpoint {
        self.requests.fetch_add(1, Ordering::Relaxed);
        let setup = self.setup.clone();
        self.rt
            .chan_create(self.group, self.proto.clone(), move |ep| setup(ep))
            .expect("group and session were checked when the service was created")
    }
}
