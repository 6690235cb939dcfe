#![allow(dead_code)]

use std::fs;
use std::io::{BufRead, BufReader, Read, Write};
use std::net::TcpStream;
use std::path::{Path, PathBuf};
use std::process::{Child, Command, Stdio};

use serde_json::Value;
use tempfile::TempDir;

pub const NOW: &str = "2026-01-01T00:00:00Z";

pub fn corpus(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("../../corpus")
        .join(name)
}

fn copy_dir(from: &Path, to: &Path) {
    fs::create_dir_all(to).unwrap();
    for entry in fs::read_dir(from).unwrap() {
        let entry = entry.unwrap();
        let target = to.join(entry.file_name());
        if entry.file_type().unwrap().is_dir() {
            copy_dir(&entry.path(), &target);
        } else {
            fs::copy(entry.path(), target).unwrap();
        }
    }
}

/// A private copy of a corpus project without any ledger.
pub fn scratch(name: &str) -> TempDir {
    let dir = tempfile::tempdir().unwrap();
    copy_dir(&corpus(name), dir.path());
    let _ = fs::remove_dir_all(dir.path().join(".vobs"));
    dir
}

pub fn edit(path: &Path, from: &str, to: &str) {
    let text = fs::read_to_string(path).unwrap();
    assert!(
        text.contains(from),
        "{} does not contain {from:?}",
        path.display()
    );
    fs::write(path, text.replacen(from, to, 1)).unwrap();
}

pub struct Run {
    pub code: i32,
    pub stdout: String,
    pub stderr: String,
}

fn vobs(project: &Path) -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_vobs"));
    c.arg("-C")
        .arg(project)
        .env("VOBS_NOW", NOW)
        .env_remove("VOBS_LIMITS_MAX_STATES");
    c
}

pub fn run(project: &Path, args: &[&str]) -> Run {
    run_env(project, args, &[])
}

pub fn run_env(project: &Path, args: &[&str], env: &[(&str, &str)]) -> Run {
    let out = vobs(project)
        .args(args)
        .envs(env.iter().copied())
        .output()
        .unwrap();
    Run {
        code: out.status.code().expect("exited normally"),
        stdout: String::from_utf8(out.stdout).unwrap(),
        stderr: String::from_utf8(out.stderr).unwrap(),
    }
}

pub fn ledger(project: &Path) -> Value {
    serde_json::from_str(&fs::read_to_string(project.join(".vobs/status.json")).unwrap()).unwrap()
}

/// Ledger records with timestamps removed.
pub fn ledger_sans_time(project: &Path) -> Value {
    let mut l = ledger(project);
    for r in l.as_array_mut().unwrap() {
        r.as_object_mut().unwrap().remove("timestamp");
    }
    l
}

/// A `vobs serve --port 0` child, killed on drop.
pub struct Server {
    pub child: Child,
    pub port: u16,
}

impl Server {
    pub fn start(project: &Path) -> Server {
        let mut child = vobs(project)
            .args(["serve", "--port", "0"])
            .stdout(Stdio::piped())
            .stderr(Stdio::null())
            .spawn()
            .unwrap();
        let mut line = String::new();
        BufReader::new(child.stdout.take().unwrap())
            .read_line(&mut line)
            .unwrap();
        let port = line
            .trim()
            .rsplit(':')
            .next()
            .and_then(|p| p.parse().ok())
            .unwrap_or_else(|| panic!("{line}"));
        Server { child, port }
    }

    /// One HTTP/1.1 exchange; returns status and JSON body (Null if none).
    pub fn request(&self, method: &str, path: &str, body: Option<Value>) -> (u16, Value) {
        let mut s = TcpStream::connect(("127.0.0.1", self.port)).unwrap();
        let payload = body.map(|b| b.to_string()).unwrap_or_default();
        write!(
            s,
            "{method} {path} HTTP/1.1\r\nHost: localhost\r\nContent-Type: application/json\r\nContent-Length: {}\r\nConnection: close\r\n\r\n{payload}",
            payload.len()
        )
        .unwrap();
        let mut raw = String::new();
        s.read_to_string(&mut raw).unwrap();
        let (head, body) = raw.split_once("\r\n\r\n").unwrap();
        let status = head.split_whitespace().nth(1).unwrap().parse().unwrap();
        (status, serde_json::from_str(body).unwrap_or(Value::Null))
    }
}

impl Drop for Server {
    fn drop(&mut self) {
        let _ = self.child.kill();
        let _ = self.child.wait();
    }
}
