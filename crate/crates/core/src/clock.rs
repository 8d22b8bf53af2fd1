//! Time sources for the join and training bookkeeping.

/// A monotonic time source reporting seconds since an arbitrary origin.
pub trait Clock {
    fn now(&self) -> f64;

    fn since(&self, start: f64) -> f64 {
        (self.now() - start).max(0.0)
    }
}

/// Reports zero for every reading; timings collapse to 0.
#[derive(Clone, Copy, Debug, Default)]
pub struct NoClock;

impl Clock for NoClock {
    fn now(&self) -> f64 {
        0.0
    }
}

#[cfg(feature = "std")]
pub use self::monotonic::MonotonicClock;

#[cfg(feature = "std")]
mod monotonic {
    use std::time::Instant;

    /// [`Instant`]-backed clock.
    #[derive(Clone, Copy, Debug)]
    pub struct MonotonicClock {
        origin: Instant,
    }

    impl MonotonicClock {
        pub fn new() -> Self {
            Self {
                origin: Instant::now(),
            }
        }
    }

    impl Default for MonotonicClock {
        fn default() -> Self {
            Self::new()
        }
    }

    impl super::Clock for MonotonicClock {
        fn now(&self) -> f64 {
            self.origin.elapsed().as_secs_f64()
        }
    }
}
