//! Data-parallel map helpers. With the `parallel` feature (default) these
//! fan out over rayon's global pool; without it they run sequentially with
//! identical results, since every mapped closure here is a pure function
//! of its input.

#[cfg(feature = "parallel")]
use rayon::prelude::*;

#[cfg(feature = "parallel")]
pub fn map<T: Sync, U: Send, F>(items: &[T], f: F) -> Vec<U>
where
    F: Fn(&T) -> U + Sync + Send,
{
    items.par_iter().map(f).collect()
}

#[cfg(not(feature = "parallel"))]
pub fn map<T, U, F>(items: &[T], f: F) -> Vec<U>
where
    F: Fn(&T) -> U,
{
    items.iter().map(f).collect()
}

#[cfg(feature = "parallel")]
pub fn try_map<T: Sync, U: Send, E: Send, F>(items: &[T], f: F) -> Result<Vec<U>, E>
where
    F: Fn(&T) -> Result<U, E> + Sync + Send,
{
    items.par_iter().map(f).collect()
}

#[cfg(not(feature = "parallel"))]
pub fn try_map<T, U, E, F>(items: &[T], f: F) -> Result<Vec<U>, E>
where
    F: Fn(&T) -> Result<U, E>,
{
    items.iter().map(f).collect()
}

/// Sequential reference path, always available; the criterion benches
/// compare this against `map` on the parallel build.
pub fn map_seq<T, U, F>(items: &[T], f: F) -> Vec<U>
where
    F: Fn(&T) -> U,
{
    items.iter().map(f).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parallel_and_sequential_agree() {
        let xs: Vec<u64> = (0..100).collect();
        let par = map(&xs, |x| x * x);
        let seq = map_seq(&xs, |x| x * x);
        assert_eq!(par, seq);
    }

    #[test]
    fn try_map_short_circuits_errors() {
        let xs = vec![1, 2, 3];
        let r: Result<Vec<i32>, String> = try_map(&xs, |&x| {
            if x == 2 {
                Err("two".to_string())
            } else {
                Ok(x)
            }
        });
        assert!(r.is_err());
    }
}
