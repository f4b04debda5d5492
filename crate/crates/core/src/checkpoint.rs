//! Versioned binary checkpoints.
//!
//! All integers are little-endian.
//!
//! ```text
//! magic      4 bytes  "T2TL"
//! version    u32      currently 1
//! kind       u8       0 = formula encoder, 1 = agent, 2 = lookup table
//! meta       u32 byte length, then UTF-8 `key=value` lines
//! vocab      u32 count, then per token: u32 byte length, UTF-8 bytes
//! tensors    u32 count, then per tensor: u32 name length, UTF-8 name,
//!            u32 rows, u32 cols, rows*cols f64 in row-major order
//! ```
//!
//! A lookup-table checkpoint lists the task keys of its closure, in index
//! order, where the other kinds list tokens, and stores one tensor `table.q`
//! with `states * tasks` rows and one column per action.

use std::fs::File;
use std::io::{self, BufReader, BufWriter, Read, Write};
use std::path::Path;

use byteorder::{LittleEndian, ReadBytesExt, WriteBytesExt};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::encoder::{EncoderConfig, EncoderParams, TokenVocab};
use crate::learner::{DqnAgent, LearnerError, TabularQ};
use crate::tensor::Matrix;

pub const MAGIC: &[u8; 4] = b"T2TL";
pub const VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum CheckpointError {
    #[error("not a checkpoint (bad magic bytes)")]
    BadMagic,
    #[error("unsupported checkpoint version {0}")]
    UnsupportedVersion(u32),
    #[error("malformed checkpoint: {0}")]
    Malformed(String),
    #[error(transparent)]
    Io(#[from] io::Error),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum CheckpointKind {
    Encoder,
    Agent,
    Table,
}

impl CheckpointKind {
    fn byte(self) -> u8 {
        match self {
            CheckpointKind::Encoder => 0,
            CheckpointKind::Agent => 1,
            CheckpointKind::Table => 2,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Checkpoint {
    pub kind: CheckpointKind,
    pub meta: Vec<(String, String)>,
    pub vocab: Vec<String>,
    pub tensors: Vec<(String, Matrix)>,
}

fn write_str<W: Write>(out: &mut W, s: &str) -> io::Result<()> {
    out.write_u32::<LittleEndian>(s.len() as u32)?;
    out.write_all(s.as_bytes())
}

fn read_str<R: Read>(input: &mut R) -> Result<String, CheckpointError> {
    let len = input.read_u32::<LittleEndian>()? as usize;
    let mut buf = vec![0u8; len];
    input.read_exact(&mut buf)?;
    String::from_utf8(buf).map_err(|_| CheckpointError::Malformed("string is not UTF-8".into()))
}

fn encoder_meta(prefix: &str, c: &EncoderConfig) -> Vec<(String, String)> {
    [
        ("layers", c.layers),
        ("heads", c.heads),
        ("d_model", c.d_model),
        ("d_ff", c.d_ff),
        ("d_out", c.d_out),
    ]
    .into_iter()
    .map(|(k, v)| (format!("{prefix}.{k}"), v.to_string()))
    .collect()
}

impl Checkpoint {
    /// A formula encoder with its vocabulary.
    pub fn from_encoder(vocab: &TokenVocab, params: &EncoderParams, mut meta: Vec<(String, String)>) -> Self {
        meta.extend(encoder_meta("encoder", &params.config));
        Self {
            kind: CheckpointKind::Encoder,
            meta,
            vocab: vocab.tokens().to_vec(),
            tensors: params
                .named_tensors()
                .into_iter()
                .map(|(n, t)| (format!("encoder.{n}"), t.clone()))
                .collect(),
        }
    }

    /// Every network of an agent: formula encoder, Q-network and the context
    /// encoder when present.
    pub fn from_agent(agent: &DqnAgent, mut meta: Vec<(String, String)>) -> Self {
        meta.extend(encoder_meta("encoder", &agent.encoder.config));
        let mut tensors: Vec<(String, Matrix)> = agent
            .encoder
            .named_tensors()
            .into_iter()
            .map(|(n, t)| (format!("encoder.{n}"), t.clone()))
            .collect();
        tensors.extend(agent.qnet.named_tensors().into_iter().map(|(n, t)| (format!("qnet.{n}"), t.clone())));
        if let Some(c) = &agent.context {
            meta.extend(encoder_meta("context", &c.config));
            tensors.extend(c.named_tensors().into_iter().map(|(n, t)| (format!("context.{n}"), t.clone())));
        }
        Self {
            kind: CheckpointKind::Agent,
            meta,
            vocab: agent.vocab.tokens().to_vec(),
            tensors,
        }
    }

    /// Tabular action values; `task_keys[i]` names task index `i`.
    pub fn from_table(q: &TabularQ, task_keys: &[String], mut meta: Vec<(String, String)>) -> Self {
        meta.push(("table.states".into(), q.num_states.to_string()));
        Self {
            kind: CheckpointKind::Table,
            meta,
            vocab: task_keys.to_vec(),
            tensors: vec![(
                "table.q".into(),
                Matrix::from_vec(q.num_states * q.num_tasks, q.num_actions, q.values.clone()),
            )],
        }
    }

    /// Task keys and values of a lookup-table checkpoint.
    pub fn table(&self) -> Result<(Vec<String>, TabularQ), CheckpointError> {
        if self.kind != CheckpointKind::Table {
            return Err(CheckpointError::Malformed("not a lookup-table checkpoint".into()));
        }
        let states: usize = self
            .meta("table.states")
            .and_then(|v| v.parse().ok())
            .ok_or_else(|| CheckpointError::Malformed("missing or invalid `table.states`".into()))?;
        let t = self
            .tensor("table.q")
            .ok_or_else(|| CheckpointError::Malformed("missing tensor `table.q`".into()))?;
        if t.rows != states * self.vocab.len() {
            return Err(CheckpointError::Malformed(format!(
                "table has {} rows for {states} states and {} tasks",
                t.rows,
                self.vocab.len()
            )));
        }
        let q = TabularQ {
            num_states: states,
            num_tasks: self.vocab.len(),
            num_actions: t.cols,
            values: t.data.clone(),
        };
        Ok((self.vocab.clone(), q))
    }

    pub fn meta(&self, key: &str) -> Option<&str> {
        self.meta.iter().find(|(k, _)| k == key).map(|(_, v)| v.as_str())
    }

    pub fn tensor(&self, name: &str) -> Option<&Matrix> {
        self.tensors.iter().find(|(n, _)| n == name).map(|(_, t)| t)
    }

    fn encoder_config(&self, prefix: &str) -> Result<EncoderConfig, CheckpointError> {
        let field = |k: &str| -> Result<usize, CheckpointError> {
            let key = format!("{prefix}.{k}");
            self.meta(&key)
                .and_then(|v| v.parse().ok())
                .ok_or_else(|| CheckpointError::Malformed(format!("missing or invalid `{key}`")))
        };
        Ok(EncoderConfig {
            layers: field("layers")?,
            heads: field("heads")?,
            d_model: field("d_model")?,
            d_ff: field("d_ff")?,
            d_out: field("d_out")?,
        })
    }

    pub fn token_vocab(&self) -> TokenVocab {
        TokenVocab::from_tokens(self.vocab.clone())
    }

    /// Rebuilds the formula encoder stored under `encoder.*`.
    pub fn encoder(&self) -> Result<(TokenVocab, EncoderParams), CheckpointError> {
        let config = self.encoder_config("encoder")?;
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let mut params = EncoderParams::for_tokens(config, self.vocab.len(), &mut rng)
            .map_err(|e| CheckpointError::Malformed(e.to_string()))?;
        let names: Vec<String> = params.named_tensors().into_iter().map(|(n, _)| n).collect();
        for (name, dst) in names.iter().zip(params.tensors_mut()) {
            self.copy_into(&format!("encoder.{name}"), dst)?;
        }
        Ok((self.token_vocab(), params))
    }

    fn copy_into(&self, name: &str, dst: &mut Matrix) -> Result<(), CheckpointError> {
        let src = self
            .tensor(name)
            .ok_or_else(|| CheckpointError::Malformed(format!("missing tensor `{name}`")))?;
        if src.shape() != dst.shape() {
            return Err(CheckpointError::Malformed(format!(
                "tensor `{name}` has shape {:?}, expected {:?}",
                src.shape(),
                dst.shape()
            )));
        }
        dst.data.copy_from_slice(&src.data);
        Ok(())
    }

    /// Loads every network into an agent built with the same configuration.
    /// The vocabularies must agree token for token.
    pub fn restore_agent(&self, agent: &mut DqnAgent) -> Result<(), LearnerError> {
        let mismatch = |m: String| LearnerError::CheckpointMismatch(m);
        match self.kind {
            CheckpointKind::Agent => {}
            CheckpointKind::Encoder => return Err(mismatch("checkpoint holds only a formula encoder".into())),
            CheckpointKind::Table => return Err(mismatch("checkpoint holds a lookup table".into())),
        }
        let ours = agent.vocab.propositions();
        let theirs = self.token_vocab();
        if let Some(p) = theirs.propositions().iter().find(|p| !ours.contains(p)) {
            return Err(mismatch(format!("proposition `{p}` is not in the environment alphabet")));
        }
        if let Some(p) = ours.iter().find(|p| !theirs.propositions().contains(p)) {
            return Err(mismatch(format!("proposition `{p}` is missing from the checkpoint")));
        }
        if theirs.tokens() != agent.vocab.tokens() {
            return Err(mismatch("vocabulary order differs".into()));
        }
        if self.meta.iter().any(|(k, _)| k.starts_with("context.")) != agent.context.is_some() {
            return Err(mismatch("context encoder presence differs".into()));
        }
        let wrap = |e: CheckpointError| LearnerError::CheckpointMismatch(e.to_string());
        let mut encoder = agent.encoder.clone();
        let names: Vec<String> = encoder.named_tensors().into_iter().map(|(n, _)| n).collect();
        for (name, dst) in names.iter().zip(encoder.tensors_mut()) {
            self.copy_into(&format!("encoder.{name}"), dst).map_err(wrap)?;
        }
        let names: Vec<String> = agent.qnet.named_tensors().into_iter().map(|(n, _)| n).collect();
        for (name, dst) in names.iter().zip(agent.qnet.tensors_mut()) {
            self.copy_into(&format!("qnet.{name}"), dst).map_err(wrap)?;
        }
        if let Some(ctx) = &mut agent.context {
            let names: Vec<String> = ctx.named_tensors().into_iter().map(|(n, _)| n).collect();
            for (name, dst) in names.iter().zip(ctx.tensors_mut()) {
                self.copy_into(&format!("context.{name}"), dst).map_err(wrap)?;
            }
        }
        agent.set_encoder(encoder);
        Ok(())
    }

    pub fn write_to<W: Write>(&self, out: &mut W) -> io::Result<()> {
        out.write_all(MAGIC)?;
        out.write_u32::<LittleEndian>(VERSION)?;
        out.write_u8(self.kind.byte())?;
        let meta: String = self.meta.iter().map(|(k, v)| format!("{k}={v}\n")).collect();
        write_str(out, &meta)?;
        out.write_u32::<LittleEndian>(self.vocab.len() as u32)?;
        for t in &self.vocab {
            write_str(out, t)?;
        }
        out.write_u32::<LittleEndian>(self.tensors.len() as u32)?;
        for (name, t) in &self.tensors {
            write_str(out, name)?;
            out.write_u32::<LittleEndian>(t.rows as u32)?;
            out.write_u32::<LittleEndian>(t.cols as u32)?;
            for &v in &t.data {
                out.write_f64::<LittleEndian>(v)?;
            }
        }
        Ok(())
    }

    pub fn read_from<R: Read>(input: &mut R) -> Result<Self, CheckpointError> {
        let mut magic = [0u8; 4];
        input.read_exact(&mut magic)?;
        if &magic != MAGIC {
            return Err(CheckpointError::BadMagic);
        }
        let version = input.read_u32::<LittleEndian>()?;
        if version != VERSION {
            return Err(CheckpointError::UnsupportedVersion(version));
        }
        let kind = match input.read_u8()? {
            0 => CheckpointKind::Encoder,
            1 => CheckpointKind::Agent,
            2 => CheckpointKind::Table,
            k => return Err(CheckpointError::Malformed(format!("unknown kind {k}"))),
        };
        let meta = read_str(input)?
            .lines()
            .map(|l| match l.split_once('=') {
                Some((k, v)) => Ok((k.to_string(), v.to_string())),
                None => Err(CheckpointError::Malformed(format!("meta line `{l}`"))),
            })
            .collect::<Result<_, _>>()?;
        let n = input.read_u32::<LittleEndian>()?;
        let vocab = (0..n).map(|_| read_str(input)).collect::<Result<_, _>>()?;
        let n = input.read_u32::<LittleEndian>()?;
        let mut tensors = Vec::with_capacity(n as usize);
        for _ in 0..n {
            let name = read_str(input)?;
            let rows = input.read_u32::<LittleEndian>()? as usize;
            let cols = input.read_u32::<LittleEndian>()? as usize;
            let mut data = vec![0.0; rows * cols];
            input.read_f64_into::<LittleEndian>(&mut data)?;
            tensors.push((name, Matrix::from_vec(rows, cols, data)));
        }
        let mut rest = [0u8; 1];
        if input.read(&mut rest)? != 0 {
            return Err(CheckpointError::Malformed("trailing bytes".into()));
        }
        Ok(Self {
            kind,
            meta,
            vocab,
            tensors,
        })
    }

    pub fn save(&self, path: &Path) -> Result<(), CheckpointError> {
        let mut out = BufWriter::new(File::create(path)?);
        self.write_to(&mut out)?;
        out.flush()?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self, CheckpointError> {
        Self::read_from(&mut BufReader::new(File::open(path)?))
    }
}
