//! The exchange wire frame. Bit-exact layout, all integers little-endian,
//! no padding:
//!
//! ```text
//! offset  size  field
//!      0     4  magic "SRXF"
//!      4     2  version (u16) = 1
//!      6     8  query id (u64)
//!     14     4  exchange id (u32)
//!     18     2  producer node (u16)
//!     20     2  partition (u16)
//!     22     4  sequence (u32)
//!     26     2  flags (u16; bit 0 = end-of-stream)
//!     28     8  payload length (u64)
//!     36     -  payload: serialized batch (columnar layout)
//! ```

use crate::error::{Error, Result};

pub const FRAME_MAGIC: [u8; 4] = *b"SRXF";
pub const FRAME_VERSION: u16 = 1;
pub const FRAME_HEADER_LEN: usize = 36;

const FLAG_END_OF_STREAM: u16 = 1;

#[derive(Debug, Clone, PartialEq)]
pub struct ExchangeFrame {
    pub query: u64,
    pub exchange: u32,
    pub producer: u16,
    pub partition: u16,
    pub sequence: u32,
    pub end_of_stream: bool,
    pub payload: Vec<u8>,
}

impl ExchangeFrame {
    pub fn data(
        query: u64,
        exchange: u32,
        producer: u16,
        partition: u16,
        sequence: u32,
        payload: Vec<u8>,
    ) -> ExchangeFrame {
        ExchangeFrame {
            query,
            exchange,
            producer,
            partition,
            sequence,
            end_of_stream: false,
            payload,
        }
    }

    pub fn end_of_stream(
        query: u64,
        exchange: u32,
        producer: u16,
        partition: u16,
        sequence: u32,
    ) -> ExchangeFrame {
        ExchangeFrame {
            query,
            exchange,
            producer,
            partition,
            sequence,
            end_of_stream: true,
            payload: Vec::new(),
        }
    }

    pub fn encode(&self) -> Vec<u8> {
        debug_assert!(!self.end_of_stream || self.payload.is_empty());
        let mut out = Vec::with_capacity(FRAME_HEADER_LEN + self.payload.len());
        out.extend_from_slice(&FRAME_MAGIC);
        out.extend_from_slice(&FRAME_VERSION.to_le_bytes());
        out.extend_from_slice(&self.query.to_le_bytes());
        out.extend_from_slice(&self.exchange.to_le_bytes());
        out.extend_from_slice(&self.producer.to_le_bytes());
        out.extend_from_slice(&self.partition.to_le_bytes());
        out.extend_from_slice(&self.sequence.to_le_bytes());
        let flags: u16 = if self.end_of_stream { FLAG_END_OF_STREAM } else { 0 };
        out.extend_from_slice(&flags.to_le_bytes());
        out.extend_from_slice(&(self.payload.len() as u64).to_le_bytes());
        out.extend_from_slice(&self.payload);
        out
    }

    pub fn decode(buf: &[u8]) -> Result<ExchangeFrame> {
        if buf.len() < FRAME_HEADER_LEN {
            return Err(Error::Transport(format!(
                "frame shorter than header: {} bytes",
                buf.len()
            )));
        }
        if buf[0..4] != FRAME_MAGIC {
            return Err(Error::Transport("bad frame magic".to_string()));
        }
        let u16_at = |o: usize| u16::from_le_bytes(buf[o..o + 2].try_into().unwrap());
        let u32_at = |o: usize| u32::from_le_bytes(buf[o..o + 4].try_into().unwrap());
        let u64_at = |o: usize| u64::from_le_bytes(buf[o..o + 8].try_into().unwrap());
        let version = u16_at(4);
        if version != FRAME_VERSION {
            return Err(Error::Transport(format!("unknown frame version {version}")));
        }
        let payload_len = u64_at(28) as usize;
        if buf.len() != FRAME_HEADER_LEN + payload_len {
            return Err(Error::Transport(format!(
                "frame length {} does not match header payload length {}",
                buf.len(),
                payload_len
            )));
        }
        let flags = u16_at(26);
        let end_of_stream = flags & FLAG_END_OF_STREAM != 0;
        if end_of_stream && payload_len != 0 {
            return Err(Error::Transport(
                "end-of-stream frame with nonempty payload".to_string(),
            ));
        }
        Ok(ExchangeFrame {
            query: u64_at(6),
            exchange: u32_at(14),
            producer: u16_at(18),
            partition: u16_at(20),
            sequence: u32_at(22),
            end_of_stream,
            payload: buf[FRAME_HEADER_LEN..].to_vec(),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip() {
        let f = ExchangeFrame::data(7, 3, 1, 2, 9, vec![1, 2, 3]);
        let bytes = f.encode();
        assert_eq!(bytes.len(), FRAME_HEADER_LEN + 3);
        assert_eq!(&bytes[0..4], b"SRXF");
        let back = ExchangeFrame::decode(&bytes).unwrap();
        assert_eq!(back, f);
    }

    #[test]
    fn eos_has_empty_payload() {
        let f = ExchangeFrame::end_of_stream(1, 2, 3, 0, 5);
        let bytes = f.encode();
        assert_eq!(bytes.len(), FRAME_HEADER_LEN);
        let back = ExchangeFrame::decode(&bytes).unwrap();
        assert!(back.end_of_stream);
        assert!(back.payload.is_empty());
    }

    #[test]
    fn corrupt_frames_rejected() {
        let f = ExchangeFrame::data(1, 1, 1, 1, 1, vec![9]);
        let mut bytes = f.encode();
        bytes[0] = b'X';
        assert!(ExchangeFrame::decode(&bytes).is_err());
        let bytes = f.encode();
        assert!(ExchangeFrame::decode(&bytes[..bytes.len() - 1]).is_err());
    }
}
