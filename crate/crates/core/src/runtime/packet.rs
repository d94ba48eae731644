use std::fmt;

use serde::{Deserialize, Serialize};

use super::RuntimeError;
use crate::coupling::WindProfile;

/// Identifier of a registered model; ids are assigned contiguously from 1.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct ModelId(pub u32);

impl fmt::Display for ModelId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "model {}", self.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum PacketType {
    ReqTime,
    RespTime,
    ReqData,
    RespData,
    Fin,
}

impl PacketType {
    pub const ALL: [PacketType; 5] = [
        PacketType::ReqTime,
        PacketType::RespTime,
        PacketType::ReqData,
        PacketType::RespData,
        PacketType::Fin,
    ];

    #[inline]
    pub fn index(self) -> usize {
        self as usize
    }

    pub fn is_request(self) -> bool {
        matches!(self, PacketType::ReqTime | PacketType::ReqData)
    }

    pub fn is_response(self) -> bool {
        matches!(self, PacketType::RespTime | PacketType::RespData)
    }

    pub fn is_control(self) -> bool {
        self == PacketType::Fin
    }

    pub fn name(self) -> &'static str {
        match self {
            PacketType::ReqTime => "REQTIME",
            PacketType::RespTime => "RESPTIME",
            PacketType::ReqData => "REQDATA",
            PacketType::RespData => "RESPDATA",
            PacketType::Fin => "FIN",
        }
    }
}

impl fmt::Display for PacketType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// A typed message between two models. Fields are private so the
/// construction-time checks cannot be bypassed.
#[derive(Debug, Clone, PartialEq)]
pub struct Packet {
    ptype: PacketType,
    source: ModelId,
    destination: ModelId,
    timestamp: u64,
    data_id: u32,
    payload: Option<WindProfile>,
}

impl Packet {
    pub fn new(
        ptype: PacketType,
        source: ModelId,
        destination: ModelId,
        timestamp: u64,
        data_id: u32,
        payload: Option<WindProfile>,
    ) -> Result<Self, RuntimeError> {
        if source == destination {
            return Err(RuntimeError::InvalidPacket(format!("{ptype} from {source} addressed to itself")));
        }
        if payload.is_some() != (ptype == PacketType::RespData) {
            return Err(RuntimeError::InvalidPacket(format!(
                "{ptype} must {}carry a payload",
                if ptype == PacketType::RespData { "" } else { "not " }
            )));
        }
        // REQTIME may announce the data id the sender will request at this boundary.
        let carries_id = matches!(ptype, PacketType::ReqTime | PacketType::ReqData | PacketType::RespData);
        if !carries_id && data_id != 0 {
            return Err(RuntimeError::InvalidPacket(format!("{ptype} carries data id {data_id}")));
        }
        Ok(Self { ptype, source, destination, timestamp, data_id, payload })
    }

    pub fn req_time(source: ModelId, destination: ModelId, timestamp: u64, announce: u32) -> Result<Self, RuntimeError> {
        Self::new(PacketType::ReqTime, source, destination, timestamp, announce, None)
    }

    pub fn resp_time(source: ModelId, destination: ModelId, timestamp: u64) -> Result<Self, RuntimeError> {
        Self::new(PacketType::RespTime, source, destination, timestamp, 0, None)
    }

    pub fn req_data(source: ModelId, destination: ModelId, timestamp: u64, data_id: u32) -> Result<Self, RuntimeError> {
        Self::new(PacketType::ReqData, source, destination, timestamp, data_id, None)
    }

    pub fn resp_data(
        source: ModelId,
        destination: ModelId,
        timestamp: u64,
        data_id: u32,
        profile: WindProfile,
    ) -> Result<Self, RuntimeError> {
        Self::new(PacketType::RespData, source, destination, timestamp, data_id, Some(profile))
    }

    pub fn fin(source: ModelId, destination: ModelId, timestamp: u64) -> Result<Self, RuntimeError> {
        Self::new(PacketType::Fin, source, destination, timestamp, 0, None)
    }

    pub fn ptype(&self) -> PacketType {
        self.ptype
    }

    pub fn source(&self) -> ModelId {
        self.source
    }

    pub fn destination(&self) -> ModelId {
        self.destination
    }

    pub fn timestamp(&self) -> u64 {
        self.timestamp
    }

    pub fn data_id(&self) -> u32 {
        self.data_id
    }

    pub fn payload(&self) -> Option<&WindProfile> {
        self.payload.as_ref()
    }

    pub fn into_payload(self) -> Option<WindProfile> {
        self.payload
    }

    pub fn header(&self) -> PacketHeader {
        PacketHeader {
            ptype: self.ptype,
            source: self.source,
            destination: self.destination,
            timestamp: self.timestamp,
            data_id: self.data_id,
        }
    }
}

/// Everything about a packet except its payload; used for traces.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PacketHeader {
    pub ptype: PacketType,
    pub source: ModelId,
    pub destination: ModelId,
    pub timestamp: u64,
    pub data_id: u32,
}
