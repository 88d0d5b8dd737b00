//! Fixed-width little-endian encoding of element types carried in payloads.
//!
//! The transport moves raw bytes plus an element width; this trait is the
//! whole extent of datatype support.

/// A fixed-width element that can be written to and read back from a payload.
pub trait Wire: Sized + Copy {
    const WIDTH: usize;

    fn write(&self, out: &mut Vec<u8>);
    fn read(bytes: &[u8]) -> Self;
}

macro_rules! wire_prim {
    ($($t:ty),*) => {$(
        impl Wire for $t {
            const WIDTH: usize = std::mem::size_of::<$t>();

            fn write(&self, out: &mut Vec<u8>) {
                out.extend_from_slice(&self.to_le_bytes());
            }

            fn read(bytes: &[u8]) -> Self {
                <$t>::from_le_bytes(bytes[..Self::WIDTH].try_into().unwrap())
            }
        }
    )*};
}

wire_prim!(u8, u16, u32, u64, i32, i64, f64);

/// Encode a slice of elements into a fresh payload.
pub fn encode_slice<T: Wire>(elems: &[T]) -> Vec<u8> {
    let mut out = Vec::with_capacity(elems.len() * T::WIDTH);
    for e in elems {
        e.write(&mut out);
    }
    out
}

/// Decode a payload produced by [`encode_slice`]. The byte length must be a
/// multiple of the element width.
pub fn decode_vec<T: Wire>(bytes: &[u8]) -> Vec<T> {
    assert!(
        bytes.len() % T::WIDTH == 0,
        "payload of {} bytes is not a multiple of element width {}",
        bytes.len(),
        T::WIDTH
    );
    bytes.chunks_exact(T::WIDTH).map(T::read).collect()
}
