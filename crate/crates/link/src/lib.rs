//! Screen-camera link: payload coding, frame rendering and decoding, the
//! optical channel's loss and corruption models, and the transmitter's
//! display queue.

pub mod channel;
pub mod decode;
pub mod detect;
pub mod homography;
pub mod layout;
pub mod modulation;
pub mod payload;
pub mod queue;
pub mod raster;
pub mod synth;

pub use channel::{ChannelConfig, ChannelMode, PlrTable};
pub use decode::{decode_frame, decode_payload, DecodeFailure, Decoded};
pub use detect::{detect_markers, DetectionFailure, DetectorConfig};
pub use homography::{apply_homography, estimate_homography, rectify, DegenerateConfiguration};
pub use layout::{render_frame, FrameLayout};
pub use modulation::{CapacityExceeded, Modulation};
pub use payload::{collapse_bits, expand_bits, Interleaving, PayloadCodec, VelocityPayload};
pub use queue::{DisplayQueueConfig, QueuePolicy};
pub use raster::FrameRaster;
