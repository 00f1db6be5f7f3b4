use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use sha2::{Digest, Sha256};

use super::protocol::{read_frame, send_json, Frame, Request, Response, WireArray, WireCsr, WireError, DEFAULT_MAX_FRAME_BYTES, PROTOCOL_VERSION};
use super::transport::{Endpoint, Listener, Stream};
use crate::error::{Error, Result};
use crate::fom::FomSolver;
use crate::fv::{assemble_with_dt, Field, TransportProblem};
use crate::pod::ReducedState;
use crate::rom::{ReducedSolver, ReducedSystemSet};

/// What a daemon evaluates.
pub enum Problem {
    Fom(TransportProblem),
    Reduced(ReducedSystemSet),
}

impl Problem {
    pub fn kind(&self) -> &'static str {
        match self {
            Problem::Fom(_) => "fom",
            Problem::Reduced(_) => "reduced",
        }
    }

    /// Short digest identifying the loaded problem.
    pub fn hash(&self) -> String {
        let mut h = Sha256::new();
        match self {
            Problem::Fom(p) => {
                h.update(p.grid.hash().as_bytes());
                h.update(serde_json::to_vec(&p.config).unwrap_or_default());
            }
            Problem::Reduced(set) => {
                for s in &set.systems {
                    let mut buf = Vec::new();
                    if s.write_to(&mut buf).is_ok() {
                        h.update(&buf);
                    }
                }
            }
        }
        h.finalize()[..8].iter().map(|b| format!("{b:02x}")).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ServeOptions {
    pub max_frame_bytes: usize,
}

impl Default for ServeOptions {
    fn default() -> Self {
        ServeOptions { max_frame_bytes: DEFAULT_MAX_FRAME_BYTES }
    }
}

/// Request counters over the daemon's lifetime.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct SessionStats {
    pub connections: u64,
    pub requests: u64,
    pub errors: u64,
}

/// A bound daemon. [`Server::serve`] handles one client at a time until a
/// `shutdown` request arrives.
pub struct Server {
    listener: Listener,
    problem: Problem,
    options: ServeOptions,
    stats: SessionStats,
}

#[derive(Deserialize)]
struct HelloPayload {
    version: u32,
}

#[derive(Deserialize)]
pub(crate) struct ChainPayload {
    pub u_all: WireArray,
    pub n_components: usize,
    pub dts: WireArray,
    #[serde(default)]
    pub fd_eps: Option<f64>,
}

#[derive(Deserialize)]
struct AssemblePayload {
    u_prev: WireArray,
    u_lin: WireArray,
    n_components: usize,
    dt: f64,
}

#[derive(Deserialize)]
pub(crate) struct ReducedPayload {
    pub a: WireArray,
    pub b: WireArray,
    pub time: WireArray,
    pub nu: WireArray,
    #[serde(default)]
    pub fd_eps: Option<f64>,
}

fn error_code(e: &Error) -> &'static str {
    match e {
        Error::InvalidArgument(_) | Error::ShapeMismatch { .. } => "bad_param",
        Error::Protocol(_) | Error::Json(_) | Error::Format(_) => "bad_payload",
        _ => "solver_error",
    }
}

fn fields(p: &TransportProblem, u: &WireArray, n_components: usize) -> Result<Vec<Field>> {
    u.decode_rows()?.into_iter().map(|values| Field::from_values(&p.grid, n_components, values, 0.0)).collect()
}

pub(crate) fn reduced_states(p: &ReducedPayload) -> Result<Vec<ReducedState>> {
    let (a, b, t, nu) = (p.a.decode_rows()?, p.b.decode_rows()?, p.time.decode()?, p.nu.decode()?);
    if b.len() != a.len() || t.len() != a.len() || nu.len() != a.len() {
        return Err(Error::invalid("reduced state arrays disagree in row count"));
    }
    Ok(a.into_iter().zip(b).zip(t).zip(nu).map(|(((a, b), time), nu)| ReducedState { a, b, time, nu }).collect())
}

impl Server {
    pub fn bind(endpoint: &Endpoint, problem: Problem, options: ServeOptions) -> Result<Self> {
        Ok(Server { listener: Listener::bind(endpoint)?, problem, options, stats: SessionStats::default() })
    }

    /// The bound endpoint, with the actual port for `host:0`.
    pub fn local_endpoint(&self) -> Result<Endpoint> {
        self.listener.local_endpoint()
    }

    pub fn serve(mut self) -> Result<SessionStats> {
        log::info!("serving {} problem {} on {}", self.problem.kind(), self.problem.hash(), self.local_endpoint()?);
        loop {
            let stream = self.listener.accept()?;
            self.stats.connections += 1;
            if self.session(stream)? {
                log::info!("shutdown after {} requests", self.stats.requests);
                return Ok(self.stats);
            }
        }
    }

    /// Serves one connection; returns true on shutdown.
    fn session(&mut self, mut stream: Stream) -> Result<bool> {
        let mut ready = false;
        loop {
            let body = match read_frame(&mut stream, self.options.max_frame_bytes) {
                Ok(Frame::Body(b)) => b,
                Ok(Frame::Closed) => return Ok(false),
                Ok(Frame::TooLarge(n)) => {
                    log::warn!("closing connection: frame of {n} bytes exceeds {}", self.options.max_frame_bytes);
                    let msg = format!("frame of {n} bytes exceeds the cap of {}", self.options.max_frame_bytes);
                    let _ = send_json(&mut stream, &reply_error(0, "frame_too_large", msg));
                    return Ok(false);
                }
                Err(e) => {
                    log::warn!("closing connection: {e}");
                    return Ok(false);
                }
            };
            let req: Request = match serde_json::from_slice(&body) {
                Ok(r) => r,
                Err(e) => {
                    log::warn!("closing connection: malformed request: {e}");
                    let _ = send_json(&mut stream, &reply_error(0, "malformed", e.to_string()));
                    return Ok(false);
                }
            };
            self.stats.requests += 1;
            let shutdown = req.cmd == "shutdown";
            let resp = match self.handle(&req, &mut ready) {
                Ok(payload) => Response { id: req.id, payload: Some(payload), error: None },
                Err((code, message)) => {
                    self.stats.errors += 1;
                    reply_error(req.id, code, message)
                }
            };
            if let Err(e) = send_json(&mut stream, &resp) {
                log::warn!("closing connection: {e}");
                return Ok(shutdown);
            }
            if shutdown {
                return Ok(true);
            }
        }
    }

    fn handle(&mut self, req: &Request, ready: &mut bool) -> std::result::Result<Value, (&'static str, String)> {
        let fail = |e: Error| (error_code(&e), e.to_string());
        match req.cmd.as_str() {
            "hello" => {
                let p: HelloPayload = serde_json::from_value(req.payload.clone()).map_err(|e| ("bad_payload", e.to_string()))?;
                if p.version != PROTOCOL_VERSION {
                    return Err(("bad_version", format!("daemon speaks version {PROTOCOL_VERSION}, client {}", p.version)));
                }
                *ready = true;
                Ok(json!({ "version": PROTOCOL_VERSION, "problem": self.problem.hash(), "kind": self.problem.kind() }))
            }
            "shutdown" => Ok(json!({})),
            "assemble" | "residual" | "jacobian" | "reduced_rhs" | "reduced_jacobian" if !*ready => {
                Err(("not_ready", "send hello first".into()))
            }
            "assemble" => match &self.problem {
                Problem::Fom(p) => self.assemble(p, &req.payload).map_err(fail),
                _ => Err(("wrong_problem", "assemble needs a full-order problem".into())),
            },
            "residual" | "jacobian" => match &mut self.problem {
                Problem::Fom(p) => chain(p, &req.cmd, &req.payload).map_err(fail),
                _ => Err(("wrong_problem", format!("{} needs a full-order problem", req.cmd))),
            },
            "reduced_rhs" | "reduced_jacobian" => match &mut self.problem {
                Problem::Reduced(set) => reduced(set, &req.cmd, &req.payload).map_err(fail),
                _ => Err(("wrong_problem", format!("{} needs a reduced problem", req.cmd))),
            },
            other => Err(("unknown_command", format!("unknown command {other:?}"))),
        }
    }

    fn assemble(&self, p: &TransportProblem, payload: &Value) -> Result<Value> {
        let a: AssemblePayload = serde_json::from_value(payload.clone())?;
        let u_prev = Field::from_values(&p.grid, a.n_components, a.u_prev.decode()?, 0.0)?;
        let u_lin = Field::from_values(&p.grid, a.n_components, a.u_lin.decode()?, 0.0)?;
        let sys = assemble_with_dt(&p.grid, &p.config, &u_prev, &u_lin, a.dt)?;
        Ok(json!({ "a": WireCsr::encode(&sys.a), "b": WireArray::vector(&sys.b) }))
    }
}

fn reply_error(id: u64, code: &str, message: String) -> Response {
    Response { id, payload: None, error: Some(WireError { code: code.into(), message }) }
}

fn chain(p: &mut TransportProblem, cmd: &str, payload: &Value) -> Result<Value> {
    let c: ChainPayload = serde_json::from_value(payload.clone())?;
    let u_all = fields(p, &c.u_all, c.n_components)?;
    let dts = c.dts.decode()?;
    if cmd == "residual" {
        let bundles = p.residuals(&u_all, &dts)?;
        let r: Vec<Vec<f64>> = bundles.iter().map(|b| b.r.clone()).collect();
        let b: Vec<Vec<f64>> = bundles.iter().map(|b| b.system.b.clone()).collect();
        let a: Vec<WireCsr> = bundles.iter().map(|b| WireCsr::encode(&b.system.a)).collect();
        Ok(json!({ "r": WireArray::rows(&r)?, "a": a, "b": WireArray::rows(&b)? }))
    } else {
        let eps = c.fd_eps.ok_or_else(|| Error::invalid("jacobian needs fd_eps"))?;
        if !(eps > 0.0) {
            return Err(Error::invalid(format!("fd_eps must be positive, got {eps}")));
        }
        let blocks = p.previous_jacobians(&u_all, &dts, eps)?;
        Ok(json!({ "blocks": blocks.iter().map(WireCsr::encode).collect::<Vec<_>>() }))
    }
}

fn reduced(set: &mut ReducedSystemSet, cmd: &str, payload: &Value) -> Result<Value> {
    let p: ReducedPayload = serde_json::from_value(payload.clone())?;
    let states = reduced_states(&p)?;
    if cmd == "reduced_rhs" {
        let evals = set.evaluate(&states)?;
        let x: Vec<Vec<f64>> = evals.iter().map(|e| e.x.clone()).collect();
        let c: Vec<Vec<f64>> = evals.iter().map(|e| e.constraint.clone()).collect();
        Ok(json!({ "x": WireArray::rows(&x)?, "constraint": WireArray::rows(&c)? }))
    } else {
        let eps = p.fd_eps.ok_or_else(|| Error::invalid("reduced_jacobian needs fd_eps"))?;
        if !(eps > 0.0) {
            return Err(Error::invalid(format!("fd_eps must be positive, got {eps}")));
        }
        let jac = set.jacobians(&states, eps)?;
        let dx: Vec<WireArray> = jac.iter().map(|j| WireArray::from_dense(&j.dx)).collect();
        let dc: Option<Vec<WireArray>> = jac.iter().map(|j| j.dconstraint.as_ref().map(WireArray::from_dense)).collect();
        Ok(json!({ "dx": dx, "dconstraint": dc }))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn error_codes_follow_the_error_kind() {
        assert_eq!(error_code(&Error::InvalidArgument("x".into())), "bad_param");
        assert_eq!(error_code(&Error::Protocol("x".into())), "bad_payload");
        assert_eq!(error_code(&Error::Singular), "solver_error");
    }
}
