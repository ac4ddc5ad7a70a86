//! C ABI over the pvrag library.
//!
//! Handles are opaque pointers created by the `*_load` functions and
//! released with the matching `*_free`. Every fallible function returns a
//! [`PvragStatus`]; on failure a message is available from
//! [`pvrag_last_error`] on the same thread until the next failing call.
//! Panics never cross the boundary and are reported as
//! `PVRAG_STATUS_INTERNAL`.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use pvrag::assessor::parse_structured_output;
use pvrag::descriptor::{LocationLabel, QuantityInterval};
use pvrag::grid::{
    parse_case, parse_case_str, solve_power_flow, BusDemands, GridError, Network, PowerFlowOptions,
    CASE30,
};
use pvrag::index::{Embedding, EntryFilter, IndexError, VectorIndex};

/// Result code of every fallible call.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PvragStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    Io = 3,
    Format = 4,
    NotFound = 5,
    NonConvergence = 6,
    Internal = 99,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: impl Into<String>) {
    let msg = msg.into().replace('\0', " ");
    LAST_ERROR.with(|e| *e.borrow_mut() = CString::new(msg).ok());
}

fn fail(status: PvragStatus, msg: impl Into<String>) -> PvragStatus {
    set_error(msg);
    status
}

/// Runs `f`, converting panics into `Internal`.
fn guard(f: impl FnOnce() -> PvragStatus) -> PvragStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(s) => s,
        Err(p) => {
            let msg = p
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| p.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "panic".into());
            fail(PvragStatus::Internal, format!("internal error: {msg}"))
        }
    }
}

fn index_status(e: &IndexError) -> PvragStatus {
    match e {
        IndexError::Io(_) => PvragStatus::Io,
        IndexError::ZeroK
        | IndexError::DimensionMismatch { .. }
        | IndexError::ZeroEmbedding
        | IndexError::NonFinite
        | IndexError::NotNormalized(_) => PvragStatus::InvalidArgument,
        IndexError::EmptyAfterFilter | IndexError::InsufficientEntries { .. } => {
            PvragStatus::NotFound
        }
        _ => PvragStatus::Format,
    }
}

fn grid_status(e: &GridError) -> PvragStatus {
    match e {
        GridError::Io { .. } => PvragStatus::Io,
        GridError::NonConvergence { .. } | GridError::SingularSystem { .. } => {
            PvragStatus::NonConvergence
        }
        GridError::DemandLength { .. } => PvragStatus::InvalidArgument,
        _ => PvragStatus::Format,
    }
}

/// # Safety
/// `s` must be null or a valid NUL-terminated string.
unsafe fn str_arg<'a>(s: *const c_char, name: &str) -> Result<&'a str, PvragStatus> {
    if s.is_null() {
        return Err(fail(PvragStatus::NullPointer, format!("{name} is null")));
    }
    CStr::from_ptr(s)
        .to_str()
        .map_err(|_| fail(PvragStatus::InvalidArgument, format!("{name} is not UTF-8")))
}

/// Message of the last failure on this thread, or null. The pointer stays
/// valid until the next failing call on the same thread.
#[no_mangle]
pub extern "C" fn pvrag_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |s| s.as_ptr()))
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn pvrag_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

// ---------------------------------------------------------------- index

/// Opaque reference index.
pub struct PvragIndex {
    inner: VectorIndex,
    ids: Vec<CString>,
    cities: Vec<CString>,
}

impl PvragIndex {
    fn wrap(inner: VectorIndex) -> Self {
        let c = |s: &str| CString::new(s.replace('\0', " ")).unwrap_or_default();
        let ids = inner.entries().iter().map(|e| c(&e.id)).collect();
        let cities = inner.entries().iter().map(|e| c(&e.city)).collect();
        PvragIndex { inner, ids, cities }
    }
}

/// One search hit: entry position plus distance and similarity.
#[repr(C)]
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct PvragHit {
    pub entry: usize,
    pub distance: f64,
    pub similarity: f64,
}

/// Loads a PVIX index file.
///
/// # Safety
/// `path` must be a valid C string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn pvrag_index_load(
    path: *const c_char,
    out: *mut *mut PvragIndex,
) -> PvragStatus {
    guard(|| {
        if out.is_null() {
            return fail(PvragStatus::NullPointer, "out is null");
        }
        let path = match str_arg(path, "path") {
            Ok(p) => p,
            Err(s) => return s,
        };
        match VectorIndex::load(path) {
            Ok(idx) => {
                *out = Box::into_raw(Box::new(PvragIndex::wrap(idx)));
                PvragStatus::Ok
            }
            Err(e) => fail(index_status(&e), e.to_string()),
        }
    })
}

/// # Safety
/// `index` must be null or a handle from `pvrag_index_load`, not yet freed.
#[no_mangle]
pub unsafe extern "C" fn pvrag_index_free(index: *mut PvragIndex) {
    if !index.is_null() {
        drop(Box::from_raw(index));
    }
}

/// Number of entries; 0 for a null handle.
///
/// # Safety
/// `index` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn pvrag_index_len(index: *const PvragIndex) -> usize {
    index.as_ref().map_or(0, |i| i.inner.len())
}

/// Embedding dimension; 0 for a null handle.
///
/// # Safety
/// `index` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn pvrag_index_dim(index: *const PvragIndex) -> usize {
    index.as_ref().map_or(0, |i| i.inner.dim())
}

/// Id of entry `entry`, or null when out of range. Valid while the handle lives.
///
/// # Safety
/// `index` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn pvrag_index_entry_id(
    index: *const PvragIndex,
    entry: usize,
) -> *const c_char {
    index
        .as_ref()
        .and_then(|i| i.ids.get(entry))
        .map_or(ptr::null(), |s| s.as_ptr())
}

/// City of entry `entry`, or null when out of range. Valid while the handle lives.
///
/// # Safety
/// `index` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn pvrag_index_entry_city(
    index: *const PvragIndex,
    entry: usize,
) -> *const c_char {
    index
        .as_ref()
        .and_then(|i| i.cities.get(entry))
        .map_or(ptr::null(), |s| s.as_ptr())
}

/// Exact top-`k` search. `query` holds `dim` floats and is normalized
/// internally. `exclude_city` may be null. Writes at most `k` hits, ordered
/// by ascending distance then id, into `hits` (capacity `k`) and their count
/// into `count`.
///
/// # Safety
/// Pointers must be valid for the stated lengths; `index` must be live.
#[no_mangle]
pub unsafe extern "C" fn pvrag_index_search(
    index: *const PvragIndex,
    query: *const f32,
    dim: usize,
    k: usize,
    exclude_city: *const c_char,
    hits: *mut PvragHit,
    count: *mut usize,
) -> PvragStatus {
    guard(|| {
        let Some(idx) = index.as_ref() else {
            return fail(PvragStatus::NullPointer, "index is null");
        };
        if query.is_null() || hits.is_null() || count.is_null() {
            return fail(
                PvragStatus::NullPointer,
                "query, hits and count must be non-null",
            );
        }
        let values = std::slice::from_raw_parts(query, dim).to_vec();
        let embedding = match Embedding::new(values) {
            Ok(e) => e,
            Err(e) => return fail(index_status(&e), e.to_string()),
        };
        let mut filter = EntryFilter::none();
        if !exclude_city.is_null() {
            match str_arg(exclude_city, "exclude_city") {
                Ok(c) => filter = filter.excluding_city(c),
                Err(s) => return s,
            }
        }
        match idx.inner.search_topk(&embedding, k, &filter) {
            Ok(found) => {
                let out = std::slice::from_raw_parts_mut(hits, k);
                for (slot, h) in out.iter_mut().zip(&found) {
                    *slot = PvragHit {
                        entry: idx.inner.position(&h.entry.id).unwrap_or(usize::MAX),
                        distance: h.distance,
                        similarity: h.similarity,
                    };
                }
                *count = found.len();
                PvragStatus::Ok
            }
            Err(e) => fail(index_status(&e), e.to_string()),
        }
    })
}

// ----------------------------------------------------------- descriptor

/// Parsed descriptor. `quantity` is 0..=3 for (0,1], (1,5], (5,10],
/// (10,inf) and -1 for NA. `location` is 0..=8 for top, bottom, left,
/// right, center, top-left, top-right, bottom-left, bottom-right and -1
/// for NA.
#[repr(C)]
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct PvragDescriptor {
    pub presence: bool,
    pub quantity: i32,
    pub location: i32,
}

/// Parses raw model output into a validated descriptor.
///
/// # Safety
/// `raw` must be a valid C string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn pvrag_parse_descriptor(
    raw: *const c_char,
    out: *mut PvragDescriptor,
) -> PvragStatus {
    guard(|| {
        if out.is_null() {
            return fail(PvragStatus::NullPointer, "out is null");
        }
        let raw = match str_arg(raw, "raw") {
            Ok(r) => r,
            Err(s) => return s,
        };
        match parse_structured_output(raw) {
            Ok(d) => {
                let code = |i: Option<usize>| i.map_or(-1, |i| i as i32);
                *out = PvragDescriptor {
                    presence: d.presence,
                    quantity: code(d.quantity.rank()),
                    location: code(
                        (!d.location.is_na())
                            .then(|| LocationLabel::ALL.iter().position(|l| *l == d.location))
                            .flatten(),
                    ),
                };
                PvragStatus::Ok
            }
            Err(e) => fail(PvragStatus::Format, e.to_string()),
        }
    })
}

/// Representative panel count of quantity code 0..=3; negative for other codes.
#[no_mangle]
pub extern "C" fn pvrag_quantity_panels(quantity: i32) -> f64 {
    usize::try_from(quantity)
        .ok()
        .and_then(|i| QuantityInterval::ORDERED.get(i))
        .and_then(|q| q.representative_count().ok())
        .unwrap_or(-1.0)
}

// -------------------------------------------------------------- network

/// Opaque power network.
pub struct PvragNetwork {
    inner: Network,
}

fn network_out(r: Result<Network, GridError>, out: *mut *mut PvragNetwork) -> PvragStatus {
    match r {
        Ok(n) => {
            // SAFETY: callers check `out` for null first.
            unsafe { *out = Box::into_raw(Box::new(PvragNetwork { inner: n })) };
            PvragStatus::Ok
        }
        Err(e) => fail(grid_status(&e), e.to_string()),
    }
}

/// Loads a MATPOWER-format case file.
///
/// # Safety
/// `path` must be a valid C string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn pvrag_network_load(
    path: *const c_char,
    out: *mut *mut PvragNetwork,
) -> PvragStatus {
    guard(|| {
        if out.is_null() {
            return fail(PvragStatus::NullPointer, "out is null");
        }
        match str_arg(path, "path") {
            Ok(p) => network_out(parse_case(p), out),
            Err(s) => s,
        }
    })
}

/// The bundled 30-bus test case.
///
/// # Safety
/// `out` must be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn pvrag_network_case30(out: *mut *mut PvragNetwork) -> PvragStatus {
    guard(|| {
        if out.is_null() {
            return fail(PvragStatus::NullPointer, "out is null");
        }
        network_out(parse_case_str(CASE30), out)
    })
}

/// # Safety
/// `net` must be null or a live handle, not yet freed.
#[no_mangle]
pub unsafe extern "C" fn pvrag_network_free(net: *mut PvragNetwork) {
    if !net.is_null() {
        drop(Box::from_raw(net));
    }
}

/// Number of buses; 0 for a null handle.
///
/// # Safety
/// `net` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn pvrag_network_bus_count(net: *const PvragNetwork) -> usize {
    net.as_ref().map_or(0, |n| n.inner.len())
}

/// External id of the bus at `position`, or 0 when out of range.
///
/// # Safety
/// `net` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn pvrag_network_bus_id(net: *const PvragNetwork, position: usize) -> u32 {
    net.as_ref()
        .and_then(|n| n.inner.buses().get(position))
        .map_or(0, |b| b.id)
}

/// Solution summary of [`pvrag_network_solve`].
#[repr(C)]
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct PvragPowerFlow {
    pub slack_p_mw: f64,
    pub slack_q_mvar: f64,
    pub losses_mw: f64,
    pub max_mismatch: f64,
    pub iterations: usize,
}

/// Newton–Raphson power flow from a flat start.
///
/// `p_mw`/`q_mvar` give per-bus demand in bus order (length `n`); pass null
/// for both to use the case's nominal demand. `tol <= 0` and `max_iter == 0`
/// select the defaults (1e-8 pu, 20). `v_mag`/`v_ang` receive `n` values each
/// and may be null.
///
/// # Safety
/// Non-null pointers must be valid for `n` elements; `net` must be live.
#[no_mangle]
pub unsafe extern "C" fn pvrag_network_solve(
    net: *const PvragNetwork,
    p_mw: *const f64,
    q_mvar: *const f64,
    n: usize,
    tol: f64,
    max_iter: usize,
    v_mag: *mut f64,
    v_ang: *mut f64,
    summary: *mut PvragPowerFlow,
) -> PvragStatus {
    guard(|| {
        let Some(net) = net.as_ref() else {
            return fail(PvragStatus::NullPointer, "network is null");
        };
        let net = &net.inner;
        if n != net.len() {
            return fail(
                PvragStatus::InvalidArgument,
                format!("n = {n} but the network has {} buses", net.len()),
            );
        }
        let demands = match (p_mw.is_null(), q_mvar.is_null()) {
            (true, true) => net.nominal_demands(),
            (false, false) => BusDemands {
                p_mw: std::slice::from_raw_parts(p_mw, n).to_vec(),
                q_mvar: std::slice::from_raw_parts(q_mvar, n).to_vec(),
            },
            _ => {
                return fail(
                    PvragStatus::NullPointer,
                    "p_mw and q_mvar must both be null or both set",
                )
            }
        };
        let defaults = PowerFlowOptions::default();
        let opts = PowerFlowOptions {
            tol: if tol > 0.0 { tol } else { defaults.tol },
            max_iter: if max_iter > 0 {
                max_iter
            } else {
                defaults.max_iter
            },
        };
        match solve_power_flow(net, &demands, &opts) {
            Ok(sol) => {
                if !v_mag.is_null() {
                    std::slice::from_raw_parts_mut(v_mag, n).copy_from_slice(&sol.v_mag_pu);
                }
                if !v_ang.is_null() {
                    std::slice::from_raw_parts_mut(v_ang, n).copy_from_slice(&sol.v_ang_rad);
                }
                if let Some(s) = summary.as_mut() {
                    *s = PvragPowerFlow {
                        slack_p_mw: sol.slack_p_mw,
                        slack_q_mvar: sol.slack_q_mvar,
                        losses_mw: sol.losses_mw,
                        max_mismatch: sol.max_mismatch,
                        iterations: sol.iterations,
                    };
                }
                PvragStatus::Ok
            }
            Err(e) => fail(grid_status(&e), e.to_string()),
        }
    })
}
