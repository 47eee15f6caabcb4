use std::fmt;
use std::sync::atomic::{AtomicU64, Ordering};

/// A black-box oracle: an answer function plus a monotone query counter.
///
/// Every call to [`OracleHandle::query`] advances the counter by the declared
/// per-call cost, so reductions that wrap one handle in another can be audited
/// exactly.
pub struct OracleHandle<Q, A> {
    answer: Box<dyn Fn(&Q) -> A + Send + Sync>,
    cost: u64,
    count: AtomicU64,
}

impl<Q, A> OracleHandle<Q, A> {
    pub fn new(cost: u64, answer: impl Fn(&Q) -> A + Send + Sync + 'static) -> Self {
        Self { answer: Box::new(answer), cost, count: AtomicU64::new(0) }
    }

    pub fn query(&self, q: &Q) -> A {
        self.count.fetch_add(self.cost, Ordering::Relaxed);
        (self.answer)(q)
    }

    /// Total cost charged so far.
    #[must_use]
    pub fn queries(&self) -> u64 {
        self.count.load(Ordering::Relaxed)
    }

    #[must_use]
    pub fn cost_per_call(&self) -> u64 {
        self.cost
    }
}

impl<Q, A> fmt::Debug for OracleHandle<Q, A> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("OracleHandle")
            .field("cost", &self.cost)
            .field("queries", &self.queries())
            .finish_non_exhaustive()
    }
}
