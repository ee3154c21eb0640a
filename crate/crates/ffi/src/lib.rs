//! C ABI over the gridsynth engine.
//!
//! Every fallible function returns a [`GsStatus`]; on failure the message is available from
//! [`gs_last_error`] on the same thread. Handles are opaque and must be released with their
//! `_free` function. Strings returned through `out` parameters are owned by the caller and
//! released with [`gs_string_free`].

use std::cell::RefCell;
use std::ffi::{c_char, c_int, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};

use gridsynth::data::{encode_prompt, Step};
use gridsynth::dsl::{exec, parse_program, print_program, Action, Term};
use gridsynth::enumerate::Enumerator;
use gridsynth::envs::{EnvTag, Grid, GridState};
use gridsynth::explain::{render, trace_execution, Format};
use gridsynth::grammar::Grammar;
use gridsynth::Error;

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GsStatus {
    Ok = 0,
    NullArgument = 1,
    InvalidUtf8 = 2,
    Syntax = 3,
    Type = 4,
    Runtime = 5,
    UnknownEnv = 6,
    Io = 7,
    Invalid = 8,
    Panic = 9,
}

/// A probabilistic grammar over one environment's DSL.
pub struct GsGrammar {
    inner: Grammar,
}

/// A parsed program; it keeps its own copy of any library function it calls.
pub struct GsProgram {
    inner: Term,
    env: EnvTag,
}

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn set_error(msg: &str) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = c);
}

fn status_of(e: &Error) -> GsStatus {
    match e {
        Error::Syntax(_) | Error::UnboundVariable(_) | Error::UnknownPrimitive(_) => GsStatus::Syntax,
        Error::TypeMismatch { .. } | Error::NotDerivable(_) | Error::DepthUnsatisfiable { .. } => GsStatus::Type,
        Error::OutOfBoundsGet { .. } | Error::Runtime(_) | Error::IllegalAction(_) => GsStatus::Runtime,
        Error::UnknownEnv(_) => GsStatus::UnknownEnv,
        Error::Io(_) => GsStatus::Io,
        _ => GsStatus::Invalid,
    }
}

struct Fail(GsStatus, String);

impl From<Error> for Fail {
    fn from(e: Error) -> Self {
        Fail(status_of(&e), e.to_string())
    }
}

fn guard(f: impl FnOnce() -> Result<(), Fail>) -> GsStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => GsStatus::Ok,
        Ok(Err(Fail(s, msg))) => {
            set_error(&msg);
            s
        }
        Err(_) => {
            set_error("internal panic");
            GsStatus::Panic
        }
    }
}

fn null(what: &str) -> Fail {
    Fail(GsStatus::NullArgument, format!("`{what}` is null"))
}

unsafe fn text<'a>(p: *const c_char, what: &str) -> Result<&'a str, Fail> {
    if p.is_null() {
        return Err(null(what));
    }
    CStr::from_ptr(p).to_str().map_err(|_| Fail(GsStatus::InvalidUtf8, format!("`{what}` is not UTF-8")))
}

unsafe fn put_string(out: *mut *mut c_char, s: String) -> Result<(), Fail> {
    if out.is_null() {
        return Err(null("out"));
    }
    let c = CString::new(s).map_err(|_| Fail(GsStatus::Invalid, "string contains a NUL byte".into()))?;
    *out = c.into_raw();
    Ok(())
}

unsafe fn put<T>(out: *mut *mut T, v: T) -> Result<(), Fail> {
    if out.is_null() {
        return Err(null("out"));
    }
    *out = Box::into_raw(Box::new(v));
    Ok(())
}

unsafe fn state_from(
    env: EnvTag,
    cells: *const u8,
    width: usize,
    height: usize,
    direction: c_int,
) -> Result<GridState, Fail> {
    if cells.is_null() {
        return Err(null("cells"));
    }
    if width == 0 || height == 0 {
        return Err(Fail(GsStatus::Invalid, "grid must not be empty".into()));
    }
    let cells = std::slice::from_raw_parts(cells, width * height).to_vec();
    let direction = match direction {
        d if d < 0 => None,
        d if d < 4 => Some(d as u8),
        d => return Err(Fail(GsStatus::Invalid, format!("direction {d} is out of range"))),
    };
    Ok(GridState::new(env, Grid::new(width, height, cells), direction))
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn gs_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Message of the last failure on this thread; valid until the next failing call.
#[no_mangle]
pub extern "C" fn gs_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ptr())
}

/// # Safety
/// `s` must come from this library or be null.
#[no_mangle]
pub unsafe extern "C" fn gs_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

/// Uniform grammar for `env` (`maze`, `asterix` or `spaceinvaders`).
///
/// # Safety
/// `env` must be a NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn gs_grammar_uniform(env: *const c_char, out: *mut *mut GsGrammar) -> GsStatus {
    guard(|| {
        let env: EnvTag = text(env, "env")?.parse()?;
        put(out, GsGrammar { inner: Grammar::uniform(env) })
    })
}

/// # Safety
/// `json` must be a NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn gs_grammar_from_json(json: *const c_char, out: *mut *mut GsGrammar) -> GsStatus {
    guard(|| {
        let g = Grammar::from_json(text(json, "json")?)?;
        put(out, GsGrammar { inner: g })
    })
}

/// # Safety
/// `g` must be a live grammar handle and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn gs_grammar_to_json(g: *const GsGrammar, out: *mut *mut c_char) -> GsStatus {
    guard(|| {
        let g = g.as_ref().ok_or_else(|| null("grammar"))?;
        put_string(out, g.inner.to_json())
    })
}

/// # Safety
/// `g` must come from this library or be null.
#[no_mangle]
pub unsafe extern "C" fn gs_grammar_free(g: *mut GsGrammar) {
    if !g.is_null() {
        drop(Box::from_raw(g));
    }
}

/// Parses `source` against the grammar's primitives and library and checks that it is well typed.
///
/// # Safety
/// `g` must be a live grammar handle, `source` a NUL-terminated string, `out` valid.
#[no_mangle]
pub unsafe extern "C" fn gs_program_parse(g: *const GsGrammar, source: *const c_char, out: *mut *mut GsProgram) -> GsStatus {
    guard(|| {
        let g = g.as_ref().ok_or_else(|| null("grammar"))?;
        let t = parse_program(text(source, "source")?, &g.inner.prims())?;
        gridsynth::dsl::infer_type(&t)?;
        put(out, GsProgram { inner: t, env: g.inner.env() })
    })
}

/// # Safety
/// `p` must be a live program handle and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn gs_program_print(p: *const GsProgram, out: *mut *mut c_char) -> GsStatus {
    guard(|| {
        let p = p.as_ref().ok_or_else(|| null("program"))?;
        put_string(out, print_program(&p.inner))
    })
}

/// Description length of the program in nats.
///
/// # Safety
/// Both handles must be live and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn gs_program_description_length(g: *const GsGrammar, p: *const GsProgram, out: *mut f64) -> GsStatus {
    guard(|| {
        let g = g.as_ref().ok_or_else(|| null("grammar"))?;
        let p = p.as_ref().ok_or_else(|| null("program"))?;
        let out = out.as_mut().ok_or_else(|| null("out"))?;
        *out = g.inner.dl(&p.inner)?;
        Ok(())
    })
}

/// # Safety
/// `p` must come from this library or be null.
#[no_mangle]
pub unsafe extern "C" fn gs_program_free(p: *mut GsProgram) {
    if !p.is_null() {
        drop(Box::from_raw(p));
    }
}

/// Runs the program on a row-major `width * height` grid of object codes. `direction` is
/// the maze heading 0..3, or negative when the environment has none. The chosen action is
/// written as its word (`left`, `forward`, ...).
///
/// # Safety
/// `p` must be live, `cells` must point to `width * height` bytes, `out` must be valid.
#[no_mangle]
pub unsafe extern "C" fn gs_program_exec(
    p: *const GsProgram,
    cells: *const u8,
    width: usize,
    height: usize,
    direction: c_int,
    out: *mut *mut c_char,
) -> GsStatus {
    guard(|| {
        let p = p.as_ref().ok_or_else(|| null("program"))?;
        let s = state_from(p.env, cells, width, height, direction)?;
        let a: Action = exec(&p.inner, &s)?;
        put_string(out, a.word().to_string())
    })
}

/// Renders an explanation panel for one state: `format` 0 is ASCII, 1 is SVG.
///
/// # Safety
/// As for [`gs_program_exec`].
#[no_mangle]
pub unsafe extern "C" fn gs_program_explain(
    p: *const GsProgram,
    cells: *const u8,
    width: usize,
    height: usize,
    direction: c_int,
    format: c_int,
    out: *mut *mut c_char,
) -> GsStatus {
    guard(|| {
        let p = p.as_ref().ok_or_else(|| null("program"))?;
        let s = state_from(p.env, cells, width, height, direction)?;
        let format = match format {
            0 => Format::Ascii,
            1 => Format::Svg,
            f => return Err(Fail(GsStatus::Invalid, format!("unknown format {f}"))),
        };
        put_string(out, render(&trace_execution(&p.inner, &s), format))
    })
}

/// Text prompt for a single state-action pair.
///
/// # Safety
/// As for [`gs_program_exec`]; `action` must be a NUL-terminated action word.
#[no_mangle]
pub unsafe extern "C" fn gs_encode_step(
    env: *const c_char,
    cells: *const u8,
    width: usize,
    height: usize,
    direction: c_int,
    action: *const c_char,
    out: *mut *mut c_char,
) -> GsStatus {
    guard(|| {
        let env: EnvTag = text(env, "env")?.parse()?;
        let word = text(action, "action")?;
        let a = Action::from_word(word).ok_or_else(|| Fail(GsStatus::Invalid, format!("unknown action `{word}`")))?;
        let s = state_from(env, cells, width, height, direction)?;
        put_string(out, encode_prompt(&[Step::new(&s, a)])?)
    })
}

/// The first `count` programs in order of description length, one per line.
///
/// # Safety
/// `g` must be a live grammar handle and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn gs_enumerate(g: *const GsGrammar, max_depth: usize, count: usize, out: *mut *mut c_char) -> GsStatus {
    guard(|| {
        let g = g.as_ref().ok_or_else(|| null("grammar"))?;
        let lines: Vec<String> = Enumerator::new(&g.inner, &g.inner.request(), max_depth)?
            .take(count)
            .map(|(t, _)| print_program(&t))
            .collect();
        put_string(out, lines.join("\n"))
    })
}
