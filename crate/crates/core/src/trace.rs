//! Line-delimited JSON traces of messages and inter-AP envelopes.
//!
//! Message records:
//!
//! ```json
//! {"iteration":1,"ap":0,"k":2,"t":4,"kind":"psi2_to_h","prec":[..],"prec_mean":[[re,im],..]}
//! {"iteration":1,"ap":0,"k":2,"t":4,"kind":"psi2_to_x","pmf":[..]}
//! {"iteration":1,"ap":0,"k":2,"t":null,"kind":"psi3_to_h","prec":[..],"prec_mean":[[re,im],..]}
//! ```
//!
//! Envelope records, one per `(from, to, k, t)`:
//!
//! ```json
//! {"iteration":1,"from":0,"to":1,"k":2,"t":4,"pmf":[..]}
//! ```

use std::io::Write;
use std::path::Path;

use serde::Serialize;

use crate::consensus::ConsensusEnvelope;
use crate::error::{Error, Result};
use crate::gaussian::{CategoricalMsg, DiagGaussianMsg};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum MessageKind {
    Psi2ToH,
    Psi2ToX,
    Psi3ToH,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MessageRecord {
    pub iteration: usize,
    pub ap: usize,
    pub k: usize,
    pub t: Option<usize>,
    pub kind: MessageKind,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub prec: Option<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub prec_mean: Option<Vec<[f64; 2]>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub pmf: Option<Vec<f64>>,
}

impl MessageRecord {
    pub fn gaussian(
        iteration: usize,
        ap: usize,
        k: usize,
        t: Option<usize>,
        kind: MessageKind,
        msg: &DiagGaussianMsg,
    ) -> Self {
        Self {
            iteration,
            ap,
            k,
            t,
            kind,
            prec: Some(msg.prec().to_vec()),
            prec_mean: Some(msg.prec_mean().iter().map(|z| [z.re, z.im]).collect()),
            pmf: None,
        }
    }

    pub fn categorical(
        iteration: usize,
        ap: usize,
        k: usize,
        t: usize,
        kind: MessageKind,
        msg: &CategoricalMsg,
    ) -> Self {
        Self {
            iteration,
            ap,
            k,
            t: Some(t),
            kind,
            prec: None,
            prec_mean: None,
            pmf: Some(msg.pmf().to_vec()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EnvelopeRecord {
    pub iteration: usize,
    pub from: usize,
    pub to: usize,
    pub k: usize,
    pub t: usize,
    pub pmf: Vec<f64>,
}

/// Receives trace records as the engine runs.
pub trait TraceSink {
    fn message(&mut self, record: &MessageRecord) -> Result<()>;

    fn envelope(&mut self, envelope: &ConsensusEnvelope, slots: usize) -> Result<()>;
}

/// Discards everything.
#[derive(Debug, Default, Clone, Copy)]
pub struct NullSink;

impl TraceSink for NullSink {
    fn message(&mut self, _: &MessageRecord) -> Result<()> {
        Ok(())
    }

    fn envelope(&mut self, _: &ConsensusEnvelope, _: usize) -> Result<()> {
        Ok(())
    }
}

/// Writes message and envelope records as JSON lines to separate writers.
pub struct JsonLinesSink<W: Write> {
    messages: Option<W>,
    envelopes: Option<W>,
}

impl<W: Write> JsonLinesSink<W> {
    pub fn new(messages: Option<W>, envelopes: Option<W>) -> Self {
        Self {
            messages,
            envelopes,
        }
    }

    pub fn into_inner(self) -> (Option<W>, Option<W>) {
        (self.messages, self.envelopes)
    }
}

impl JsonLinesSink<std::io::BufWriter<std::fs::File>> {
    pub fn create(messages: Option<&Path>, envelopes: Option<&Path>) -> Result<Self> {
        let open = |p: &Path| {
            std::fs::File::create(p)
                .map(std::io::BufWriter::new)
                .map_err(|e| Error::io(p, e))
        };
        Ok(Self {
            messages: messages.map(open).transpose()?,
            envelopes: envelopes.map(open).transpose()?,
        })
    }
}

fn write_line<W: Write, T: Serialize>(w: &mut W, value: &T) -> Result<()> {
    let line = serde_json::to_string(value).map_err(|e| Error::InvalidArgument(e.to_string()))?;
    writeln!(w, "{line}").map_err(|e| Error::io("<trace>", e))
}

impl<W: Write> TraceSink for JsonLinesSink<W> {
    fn message(&mut self, record: &MessageRecord) -> Result<()> {
        match &mut self.messages {
            Some(w) => write_line(w, record),
            None => Ok(()),
        }
    }

    fn envelope(&mut self, envelope: &ConsensusEnvelope, slots: usize) -> Result<()> {
        let Some(w) = &mut self.envelopes else {
            return Ok(());
        };
        for (i, msg) in envelope.payload.iter().enumerate() {
            write_line(
                w,
                &EnvelopeRecord {
                    iteration: envelope.iteration,
                    from: envelope.from,
                    to: envelope.to,
                    k: i / slots,
                    t: i % slots,
                    pmf: msg.pmf().to_vec(),
                },
            )?;
        }
        Ok(())
    }
}
