use std::time::Duration;

use serde::de::DeserializeOwned;
use serde::Deserialize;
use serde_json::{json, Value};

use super::protocol::{read_frame, send_json, Frame, Request, Response, WireArray, WireCsr, DEFAULT_MAX_FRAME_BYTES, PROTOCOL_VERSION};
use super::transport::{Endpoint, Stream};
use crate::error::{Error, Result};
use crate::fom::FomSolver;
use crate::fv::{Field, LinearSystem, ResidualBundle};
use crate::linalg::CsrMatrix;
use crate::pod::ReducedState;
use crate::rom::{ReducedEval, ReducedJacobian, ReducedSolver};

pub const DEFAULT_TIMEOUT: Duration = Duration::from_secs(30);

/// Connection to a solver daemon. Request ids increase from 1; any transport
/// failure is reported as [`Error::ConnectionLost`] with the pending id.
pub struct DaemonClient {
    stream: Option<Stream>,
    next_id: u64,
    problem: String,
    kind: String,
}

#[derive(Deserialize)]
struct Hello {
    problem: String,
    kind: String,
}

#[derive(Deserialize)]
struct ResidualReply {
    r: WireArray,
    a: Vec<WireCsr>,
    b: WireArray,
}

#[derive(Deserialize)]
struct JacobianReply {
    blocks: Vec<WireCsr>,
}

#[derive(Deserialize)]
struct RhsReply {
    x: WireArray,
    constraint: WireArray,
}

#[derive(Deserialize)]
struct ReducedJacobianReply {
    dx: Vec<WireArray>,
    dconstraint: Option<Vec<WireArray>>,
}

impl DaemonClient {
    pub fn connect(endpoint: &Endpoint) -> Result<Self> {
        Self::connect_with_timeout(endpoint, DEFAULT_TIMEOUT)
    }

    pub fn connect_with_timeout(endpoint: &Endpoint, timeout: Duration) -> Result<Self> {
        let lost = |e: Error| Error::ConnectionLost { request_id: 1, reason: e.to_string() };
        let stream = Stream::connect(endpoint).map_err(lost)?;
        stream.set_timeout(Some(timeout)).map_err(lost)?;
        let mut client = DaemonClient { stream: Some(stream), next_id: 1, problem: String::new(), kind: String::new() };
        let hello: Hello = client.call("hello", json!({ "version": PROTOCOL_VERSION }))?;
        client.problem = hello.problem;
        client.kind = hello.kind;
        Ok(client)
    }

    /// Hash of the problem the daemon has loaded.
    pub fn problem(&self) -> &str {
        &self.problem
    }

    /// `"fom"` or `"reduced"`.
    pub fn kind(&self) -> &str {
        &self.kind
    }

    /// Id the next request will carry.
    pub fn next_id(&self) -> u64 {
        self.next_id
    }

    /// Assembles one implicit step on the daemon.
    pub fn assemble(&mut self, u_prev: &Field, u_lin: &Field, dt: f64) -> Result<(CsrMatrix, Vec<f64>)> {
        #[derive(Deserialize)]
        struct Reply {
            a: WireCsr,
            b: WireArray,
        }
        let payload = json!({
            "u_prev": WireArray::vector(&u_prev.values),
            "u_lin": WireArray::vector(&u_lin.values),
            "n_components": u_prev.n_components,
            "dt": dt,
        });
        let r: Reply = self.call("assemble", payload)?;
        Ok((r.a.decode()?, r.b.decode()?))
    }

    /// Asks the daemon to stop serving.
    pub fn shutdown(mut self) -> Result<()> {
        let _: Value = self.call("shutdown", json!({}))?;
        Ok(())
    }

    /// Sends one request and waits for its reply.
    pub fn call<T: DeserializeOwned>(&mut self, cmd: &str, payload: Value) -> Result<T> {
        let id = self.next_id;
        self.next_id += 1;
        let resp = self.exchange(&Request { id, cmd: cmd.into(), payload }).map_err(|e| {
            self.stream = None;
            match e {
                Error::Io(io) => Error::ConnectionLost { request_id: id, reason: io.to_string() },
                Error::ConnectionLost { reason, .. } => Error::ConnectionLost { request_id: id, reason },
                other => other,
            }
        })?;
        if resp.id != id && resp.error.is_none() {
            return Err(Error::Protocol(format!("reply id {} to request {id}", resp.id)));
        }
        if let Some(err) = resp.error {
            return Err(Error::Remote { code: err.code, message: err.message });
        }
        Ok(serde_json::from_value(resp.payload.unwrap_or(Value::Null))?)
    }

    fn exchange(&mut self, req: &Request) -> Result<Response> {
        let stream = self
            .stream
            .as_mut()
            .ok_or_else(|| Error::ConnectionLost { request_id: req.id, reason: "connection already closed".into() })?;
        send_json(&mut *stream, req)?;
        match read_frame(&mut *stream, DEFAULT_MAX_FRAME_BYTES)? {
            Frame::Body(b) => Ok(serde_json::from_slice(&b).map_err(|e| Error::Protocol(format!("malformed reply: {e}")))?),
            Frame::Closed => Err(Error::ConnectionLost { request_id: req.id, reason: "daemon closed the connection".into() }),
            Frame::TooLarge(n) => Err(Error::Protocol(format!("reply of {n} bytes exceeds the frame cap"))),
        }
    }
}

fn field_rows(u_all: &[Field]) -> Result<(WireArray, usize)> {
    let nc = u_all.first().map_or(1, |f| f.n_components);
    let rows: Vec<Vec<f64>> = u_all.iter().map(|f| f.values.clone()).collect();
    Ok((WireArray::rows(&rows)?, nc))
}

fn state_payload(states: &[ReducedState], fd_eps: Option<f64>) -> Result<Value> {
    let a: Vec<Vec<f64>> = states.iter().map(|s| s.a.clone()).collect();
    let b: Vec<Vec<f64>> = states.iter().map(|s| s.b.clone()).collect();
    let t: Vec<f64> = states.iter().map(|s| s.time).collect();
    let nu: Vec<f64> = states.iter().map(|s| s.nu).collect();
    Ok(json!({
        "a": WireArray::rows(&a)?,
        "b": WireArray::rows(&b)?,
        "time": WireArray::vector(&t),
        "nu": WireArray::vector(&nu),
        "fd_eps": fd_eps,
    }))
}

impl FomSolver for DaemonClient {
    fn residuals(&mut self, u_all: &[Field], dts: &[f64]) -> Result<Vec<ResidualBundle>> {
        let (u, nc) = field_rows(u_all)?;
        let reply: ResidualReply = self.call("residual", json!({ "u_all": u, "n_components": nc, "dts": WireArray::vector(dts) }))?;
        let (r, b) = (reply.r.decode_rows()?, reply.b.decode_rows()?);
        if r.len() != reply.a.len() || b.len() != r.len() {
            return Err(Error::Protocol("residual reply arrays disagree in length".into()));
        }
        let n_cells = u_all.first().map_or(0, |f| f.n_cells);
        r.into_iter()
            .zip(b)
            .zip(&reply.a)
            .enumerate()
            .map(|(k, ((r, b), a))| {
                Ok(ResidualBundle {
                    r,
                    system: LinearSystem { n_cells, n_components: nc, a: a.decode()?, b },
                    step: k + 1,
                    jac_current: None,
                    jac_previous: None,
                })
            })
            .collect()
    }

    fn previous_jacobians(&mut self, u_all: &[Field], dts: &[f64], fd_eps: f64) -> Result<Vec<CsrMatrix>> {
        let (u, nc) = field_rows(u_all)?;
        let payload = json!({ "u_all": u, "n_components": nc, "dts": WireArray::vector(dts), "fd_eps": fd_eps });
        let reply: JacobianReply = self.call("jacobian", payload)?;
        reply.blocks.iter().map(WireCsr::decode).collect()
    }
}

impl ReducedSolver for DaemonClient {
    fn evaluate(&mut self, states: &[ReducedState]) -> Result<Vec<ReducedEval>> {
        let reply: RhsReply = self.call("reduced_rhs", state_payload(states, None)?)?;
        let (x, c) = (reply.x.decode_rows()?, reply.constraint.decode_rows()?);
        if x.len() != states.len() || c.len() != states.len() {
            return Err(Error::Protocol("reduced_rhs reply has the wrong row count".into()));
        }
        Ok(x.into_iter().zip(c).map(|(x, constraint)| ReducedEval { x, constraint }).collect())
    }

    fn jacobians(&mut self, states: &[ReducedState], fd_eps: f64) -> Result<Vec<ReducedJacobian>> {
        let reply: ReducedJacobianReply = self.call("reduced_jacobian", state_payload(states, Some(fd_eps))?)?;
        if reply.dx.len() != states.len() {
            return Err(Error::Protocol("reduced_jacobian reply has the wrong row count".into()));
        }
        let dc: Vec<Option<WireArray>> = match reply.dconstraint {
            Some(v) => v.into_iter().map(Some).collect(),
            None => vec![None; reply.dx.len()],
        };
        reply
            .dx
            .iter()
            .zip(dc)
            .map(|(dx, dc)| Ok(ReducedJacobian { dx: dx.to_dense()?, dconstraint: dc.map(|d| d.to_dense()).transpose()? }))
            .collect()
    }
}
