use std::sync::{Condvar, Mutex};

/// Counting gate bounding how many blocking calls run at once.
#[derive(Debug)]
pub(crate) struct InFlightLimit {
    max: usize,
    active: Mutex<usize>,
    freed: Condvar,
}

pub(crate) struct Permit<'a>(&'a InFlightLimit);

impl InFlightLimit {
    pub(crate) fn new(max: usize) -> Self {
        assert!(max > 0);
        Self {
            max,
            active: Mutex::new(0),
            freed: Condvar::new(),
        }
    }

    pub(crate) fn acquire(&self) -> Permit<'_> {
        let mut active = self.active.lock().unwrap_or_else(|e| e.into_inner());
        while *active >= self.max {
            active = self.freed.wait(active).unwrap_or_else(|e| e.into_inner());
        }
        *active += 1;
        Permit(self)
    }

    #[cfg(test)]
    pub(crate) fn active(&self) -> usize {
        *self.active.lock().unwrap()
    }
}

impl Drop for Permit<'_> {
    fn drop(&mut self) {
        let mut active = self.0.active.lock().unwrap_or_else(|e| e.into_inner());
        *active -= 1;
        self.0.freed.notify_one();
    }
}
