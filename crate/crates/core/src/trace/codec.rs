//! Base-64 packing of little-endian numeric arrays.

use base64::engine::general_purpose::STANDARD;
use base64::Engine;

macro_rules! packer {
    ($pack:ident, $unpack:ident, $ty:ty, $width:expr) => {
        pub fn $pack(values: &[$ty]) -> String {
            let mut bytes = Vec::with_capacity(values.len() * $width);
            for v in values {
                bytes.extend_from_slice(&v.to_le_bytes());
            }
            STANDARD.encode(bytes)
        }

        pub fn $unpack(text: &str) -> Result<Vec<$ty>, String> {
            let bytes = STANDARD
                .decode(text)
                .map_err(|e| format!("bad base64 payload: {e}"))?;
            if bytes.len() % $width != 0 {
                return Err(format!(
                    "payload of {} bytes is not a multiple of {}",
                    bytes.len(),
                    $width
                ));
            }
            Ok(bytes
                .chunks_exact($width)
                .map(|c| <$ty>::from_le_bytes(c.try_into().expect("chunk width")))
                .collect())
        }
    };
}

packer!(pack_f32, unpack_f32, f32, 4);
packer!(pack_f64, unpack_f64, f64, 8);
packer!(pack_u32, unpack_u32, u32, 4);
