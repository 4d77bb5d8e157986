//! Recording taps for host-visible byte streams and a substring scanner used
//! to check that no secret crosses the enclave boundary in the clear.

use std::collections::HashSet;
use std::sync::{Arc, Mutex};

/// Shortest secret fragment the leak scanner looks for.
pub const LEAK_WINDOW: usize = 16;

/// Shared, append-only record of bytes observed at some vantage point.
#[derive(Debug, Clone, Default)]
pub struct Tap(Arc<Mutex<Vec<u8>>>);

impl Tap {
    pub fn new() -> Self {
        Tap::default()
    }

    pub fn record(&self, bytes: &[u8]) {
        self.0.lock().expect("tap poisoned").extend_from_slice(bytes);
    }

    pub fn snapshot(&self) -> Vec<u8> {
        self.0.lock().expect("tap poisoned").clone()
    }

    pub fn len(&self) -> usize {
        self.0.lock().expect("tap poisoned").len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Offset in `secret` of the first `window`-byte fragment that also occurs in
/// `stream`, if any. Secrets shorter than the window are searched whole.
pub fn find_leak(secret: &[u8], stream: &[u8], window: usize) -> Option<usize> {
    if secret.is_empty() {
        return None;
    }
    let window = window.min(secret.len());
    if stream.len() < window {
        return None;
    }
    let fragments: HashSet<&[u8]> = stream.windows(window).collect();
    secret.windows(window).position(|w| fragments.contains(w))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn finds_embedded_fragment() {
        let secret: Vec<u8> = (0..64).collect();
        let mut stream = vec![0xff; 10];
        stream.extend_from_slice(&secret[20..40]);
        assert_eq!(find_leak(&secret, &stream, 16), Some(20));
        assert_eq!(find_leak(&secret, &stream[..20], 16), None);
    }

    #[test]
    fn short_secrets_searched_whole() {
        assert_eq!(find_leak(b"dog", b"hot dog stand", 16), Some(0));
        assert_eq!(find_leak(b"cat", b"hot dog stand", 16), None);
    }

    #[test]
    fn tap_accumulates_across_clones() {
        let tap = Tap::new();
        tap.clone().record(b"ab");
        tap.record(b"c");
        assert_eq!(tap.snapshot(), b"abc");
    }
}
