//! External-process objective: renders a command template against the
//! current configuration, launches it without a shell, and reads one
//! scalar back — either the process wall time or the last line it prints.
//!
//! Parameters are also exported as `SPSA_PARAM_<NAME>` environment
//! variables. stdout is captured; stderr flows through to the harness log;
//! exit code 0 is required for an ok measurement.

use std::io::Read;
use std::process::{Command, Stdio};
use std::time::{Duration, Instant};

use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{Objective, ObjectiveError, ObjectiveSample, ObjectiveStatus};
use crate::space::{ParameterSpace, SystemConfig};

/// Where the scalar measurement comes from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ValueSource {
    /// Wall-clock seconds of the process lifetime, monotonic clock.
    WallClockSeconds,
    /// The final non-empty stdout line, parsed as a finite real.
    StdoutLastLine,
}

/// Split a template into argument tokens. Single-quoted segments keep
/// their whitespace; quotes are stripped; no other shell syntax exists.
fn tokenize(template: &str) -> Result<Vec<String>, ObjectiveError> {
    let mut tokens = Vec::new();
    let mut current = String::new();
    let mut started = false;
    let mut in_quote = false;
    for ch in template.chars() {
        match ch {
            '\'' => {
                in_quote = !in_quote;
                started = true;
            }
            c if c.is_whitespace() && !in_quote => {
                if started {
                    tokens.push(std::mem::take(&mut current));
                    started = false;
                }
            }
            c => {
                current.push(c);
                started = true;
            }
        }
    }
    if in_quote {
        return Err(ObjectiveError::UnbalancedQuote);
    }
    if started {
        tokens.push(current);
    }
    Ok(tokens)
}

/// Replace every `{name}` in a token with the rendered parameter value.
fn substitute(
    token: &str,
    space: &ParameterSpace,
    config: Option<&SystemConfig>,
) -> Result<String, ObjectiveError> {
    let mut out = String::with_capacity(token.len());
    let mut rest = token;
    while let Some(open) = rest.find('{') {
        out.push_str(&rest[..open]);
        let after = &rest[open + 1..];
        let close = after.find('}').ok_or(ObjectiveError::UnclosedPlaceholder)?;
        let name = &after[..close];
        let index = space
            .index_of(name)
            .ok_or_else(|| ObjectiveError::UnknownPlaceholder(name.to_string()))?;
        if let Some(config) = config {
            out.push_str(&space.spec(index).render(&config.get(index)));
        }
        rest = &after[close + 1..];
    }
    out.push_str(rest);
    Ok(out)
}

/// Materialize a command template into an argument vector for a config.
/// Booleans render as `true`/`false`, categoricals as their category
/// string, reals with six significant digits, integers verbatim.
pub fn render_command(
    template: &str,
    config: &SystemConfig,
    space: &ParameterSpace,
) -> Result<Vec<String>, ObjectiveError> {
    space.validate_config(config)?;
    let tokens = tokenize(template)?;
    let argv = tokens
        .iter()
        .map(|t| substitute(t, space, Some(config)))
        .collect::<Result<Vec<_>, _>>()?;
    if argv.is_empty() {
        return Err(ObjectiveError::EmptyCommand);
    }
    Ok(argv)
}

/// Check a template without a config: balanced quotes, closed and known
/// placeholders, at least one argument.
pub fn validate_template(template: &str, space: &ParameterSpace) -> Result<(), ObjectiveError> {
    let tokens = tokenize(template)?;
    if tokens.is_empty() {
        return Err(ObjectiveError::EmptyCommand);
    }
    for t in &tokens {
        substitute(t, space, None)?;
    }
    Ok(())
}

fn env_var_name(param: &str) -> String {
    let mut name = String::from("SPSA_PARAM_");
    for ch in param.chars() {
        if ch.is_ascii_alphanumeric() {
            name.push(ch.to_ascii_uppercase());
        } else {
            name.push('_');
        }
    }
    name
}

pub struct ProcessObjective {
    template: String,
    value_source: ValueSource,
    timeout: Duration,
    reentrant_safe: bool,
    space: ParameterSpace,
}

impl ProcessObjective {
    pub fn new(
        template: &str,
        value_source: ValueSource,
        timeout_seconds: f64,
        reentrant_safe: bool,
        space: &ParameterSpace,
    ) -> Result<ProcessObjective, ObjectiveError> {
        if !timeout_seconds.is_finite() || timeout_seconds <= 0.0 {
            return Err(ObjectiveError::Process(format!(
                "timeout_seconds must be positive, got {timeout_seconds}"
            )));
        }
        validate_template(template, space)?;
        Ok(ProcessObjective {
            template: template.to_string(),
            value_source,
            timeout: Duration::from_secs_f64(timeout_seconds),
            reentrant_safe,
            space: space.clone(),
        })
    }

    fn run_once(&self, config: &SystemConfig) -> ObjectiveSample {
        let argv = match render_command(&self.template, config, &self.space) {
            Ok(argv) => argv,
            Err(e) => {
                return ObjectiveSample::failed(
                    config.clone(),
                    ObjectiveStatus::Failed,
                    0.0,
                    e.to_string(),
                )
            }
        };
        let mut command = Command::new(&argv[0]);
        command
            .args(&argv[1..])
            .stdin(Stdio::null())
            .stdout(Stdio::piped())
            .stderr(Stdio::inherit());
        for (i, spec) in self.space.specs().iter().enumerate() {
            command.env(env_var_name(spec.name()), spec.render(&config.get(i)));
        }

        let start = Instant::now();
        let mut child = match command.spawn() {
            Ok(child) => child,
            Err(e) => {
                return ObjectiveSample::failed(
                    config.clone(),
                    ObjectiveStatus::Failed,
                    start.elapsed().as_secs_f64(),
                    format!("failed to launch `{}`: {e}", argv[0]),
                )
            }
        };

        // Drain stdout on a separate thread so a chatty child never blocks
        // on a full pipe while we wait for it.
        let mut stdout_pipe = child.stdout.take().expect("stdout was piped");
        let reader = std::thread::spawn(move || {
            let mut buf = String::new();
            let _ = stdout_pipe.read_to_string(&mut buf);
            buf
        });

        let status = loop {
            match child.try_wait() {
                Ok(Some(status)) => break status,
                Ok(None) => {
                    if start.elapsed() >= self.timeout {
                        let _ = child.kill();
                        let _ = child.wait();
                        let _ = reader.join();
                        return ObjectiveSample::failed(
                            config.clone(),
                            ObjectiveStatus::Timeout,
                            start.elapsed().as_secs_f64(),
                            format!("deadline of {:.3}s exceeded", self.timeout.as_secs_f64()),
                        );
                    }
                    std::thread::sleep(Duration::from_millis(2));
                }
                Err(e) => {
                    let _ = child.kill();
                    let _ = reader.join();
                    return ObjectiveSample::failed(
                        config.clone(),
                        ObjectiveStatus::Failed,
                        start.elapsed().as_secs_f64(),
                        format!("wait failed: {e}"),
                    );
                }
            }
        };
        let elapsed = start.elapsed().as_secs_f64();
        let stdout = reader.join().unwrap_or_default();

        if !status.success() {
            return ObjectiveSample::failed(
                config.clone(),
                ObjectiveStatus::Failed,
                elapsed,
                format!("exit status {status}"),
            );
        }
        match self.value_source {
            ValueSource::WallClockSeconds => ObjectiveSample::ok(config.clone(), elapsed, elapsed),
            ValueSource::StdoutLastLine => {
                let last = stdout.lines().rev().find(|l| !l.trim().is_empty());
                match last.map(|l| l.trim().parse::<f64>()) {
                    Some(Ok(v)) if v.is_finite() => {
                        ObjectiveSample::ok(config.clone(), v, elapsed)
                    }
                    Some(Ok(v)) => ObjectiveSample::failed(
                        config.clone(),
                        ObjectiveStatus::Failed,
                        elapsed,
                        format!("stdout value {v} is not finite"),
                    ),
                    Some(Err(e)) => ObjectiveSample::failed(
                        config.clone(),
                        ObjectiveStatus::Failed,
                        elapsed,
                        format!("cannot parse final stdout line as a real: {e}"),
                    ),
                    None => ObjectiveSample::failed(
                        config.clone(),
                        ObjectiveStatus::Failed,
                        elapsed,
                        "process produced no stdout to parse".to_string(),
                    ),
                }
            }
        }
    }
}

impl Objective for ProcessObjective {
    fn evaluate(&self, config: &SystemConfig, _rng: &mut ChaCha8Rng) -> ObjectiveSample {
        self.run_once(config)
    }

    fn reentrant_safe(&self) -> bool {
        self.reentrant_safe
    }
}
