//! Switch between rayon and plain iterators depending on the `parallel`
//! feature. Callers get identical results either way; only scheduling differs.

/// `maybe_par_map!(slice, f)` maps `f` over `slice` and collects, in order.
#[cfg(feature = "parallel")]
macro_rules! maybe_par_map {
    ($slice:expr, $f:expr) => {{
        use rayon::prelude::*;
        $slice.par_iter().map($f).collect()
    }};
}

#[cfg(not(feature = "parallel"))]
macro_rules! maybe_par_map {
    ($slice:expr, $f:expr) => {
        $slice.iter().map($f).collect()
    };
}

pub(crate) use maybe_par_map;
