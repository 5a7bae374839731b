//! C ABI over the chainedit library.
//!
//! Every fallible function returns a [`CeStatus`]; on failure a message is
//! available from [`ce_last_error`] on the same thread. Strings handed out
//! by the library are NUL-terminated UTF-8 and must be released with
//! [`ce_string_free`]. Handles are released with their own `_free` function.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::ptr;
use std::sync::Arc;

use chainedit::chain::{expand, EditRequest, ExpansionConfig};
use chainedit::dsl::{parse_path, RuleSet};
use chainedit::eval::score_answer;
use chainedit::oracle::{JudgeTable, KnowledgeOracle, StoreOracle};
use chainedit::store::{MetaTable, TripleStore};

#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum CeStatus {
    Ok = 0,
    NullArgument = 1,
    InvalidUtf8 = 2,
    InvalidInput = 3,
    Io = 4,
    Oracle = 5,
    Conflict = 6,
    Internal = 99,
}

/// Triple store handle.
pub struct CeStore(Arc<TripleStore>);

/// Directive ruleset handle.
pub struct CeRuleSet(RuleSet);

/// Relation metadata handle.
pub struct CeMeta(MetaTable);

/// Knowledge oracle handle.
pub struct CeOracle(Box<dyn KnowledgeOracle>);

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: impl Into<String>) {
    let text = msg.into().replace('\0', " ");
    LAST_ERROR.with(|e| *e.borrow_mut() = CString::new(text).ok());
}

struct Fail(CeStatus, String);

impl Fail {
    fn new(status: CeStatus, msg: impl ToString) -> Self {
        Fail(status, msg.to_string())
    }
}

fn guard(f: impl FnOnce() -> Result<(), Fail>) -> CeStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            LAST_ERROR.with(|e| *e.borrow_mut() = None);
            CeStatus::Ok
        }
        Ok(Err(Fail(status, msg))) => {
            set_error(msg);
            status
        }
        Err(_) => {
            set_error("internal panic");
            CeStatus::Internal
        }
    }
}

unsafe fn text<'a>(p: *const c_char, name: &str) -> Result<&'a str, Fail> {
    if p.is_null() {
        return Err(Fail::new(CeStatus::NullArgument, format!("{name} is null")));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|_| Fail::new(CeStatus::InvalidUtf8, format!("{name} is not UTF-8")))
}

unsafe fn opt_text<'a>(p: *const c_char, name: &str) -> Result<Option<&'a str>, Fail> {
    if p.is_null() {
        Ok(None)
    } else {
        text(p, name).map(Some)
    }
}

unsafe fn handle<'a, T>(p: *const T, name: &str) -> Result<&'a T, Fail> {
    p.as_ref()
        .ok_or_else(|| Fail::new(CeStatus::NullArgument, format!("{name} is null")))
}

unsafe fn put<T>(out: *mut *mut T, value: T) -> Result<(), Fail> {
    if out.is_null() {
        return Err(Fail::new(CeStatus::NullArgument, "output pointer is null"));
    }
    *out = Box::into_raw(Box::new(value));
    Ok(())
}

unsafe fn put_string(out: *mut *mut c_char, s: String) -> Result<(), Fail> {
    if out.is_null() {
        return Err(Fail::new(CeStatus::NullArgument, "output pointer is null"));
    }
    let c = CString::new(s).map_err(|_| Fail::new(CeStatus::Internal, "string contains NUL"))?;
    *out = c.into_raw();
    Ok(())
}

unsafe fn free<T>(p: *mut T) {
    if !p.is_null() {
        drop(Box::from_raw(p));
    }
}

/// Message for the last failed call on this thread, or null. Valid until
/// the next call into the library on this thread.
#[no_mangle]
pub extern "C" fn ce_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Library version as a static string.
#[no_mangle]
pub extern "C" fn ce_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Releases a string returned by this library. Null is ignored.
///
/// # Safety
/// `s` must come from this library and not have been freed.
#[no_mangle]
pub unsafe extern "C" fn ce_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

/// Loads a tab-separated triple file, with an optional label file.
///
/// # Safety
/// Paths must be valid C strings (`labels_path` may be null); `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn ce_store_load(
    triples_path: *const c_char,
    labels_path: *const c_char,
    out: *mut *mut CeStore,
) -> CeStatus {
    guard(|| {
        let triples = text(triples_path, "triples_path")?;
        let labels = opt_text(labels_path, "labels_path")?;
        let store = TripleStore::ingest(Path::new(triples), labels.map(Path::new))
            .map_err(|e| Fail::new(CeStatus::Io, e))?;
        put(out, CeStore(Arc::new(store)))
    })
}

/// # Safety
/// `store` must come from [`ce_store_load`] and not have been freed.
#[no_mangle]
pub unsafe extern "C" fn ce_store_free(store: *mut CeStore) {
    free(store)
}

/// Number of distinct triples, or 0 for a null handle.
///
/// # Safety
/// `store` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn ce_store_len(store: *const CeStore) -> usize {
    store.as_ref().map_or(0, |s| s.0.len())
}

/// Objects of `(subject, relation)` as a JSON array of entity ids.
///
/// # Safety
/// Arguments must be live handles and valid C strings; `out_json` must be writable.
#[no_mangle]
pub unsafe extern "C" fn ce_objects_of(
    store: *const CeStore,
    subject: *const c_char,
    relation: *const c_char,
    out_json: *mut *mut c_char,
) -> CeStatus {
    guard(|| {
        let store = handle(store, "store")?;
        let objects: Vec<String> = store
            .0
            .objects_of(text(subject, "subject")?, text(relation, "relation")?)
            .iter()
            .map(|e| e.as_str().to_string())
            .collect();
        put_string(out_json, serde_json::to_string(&objects).expect("strings serialize"))
    })
}

/// Loads a ruleset JSON file.
///
/// # Safety
/// `path` must be a valid C string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn ce_ruleset_load(path: *const c_char, out: *mut *mut CeRuleSet) -> CeStatus {
    guard(|| {
        let rules = RuleSet::load(Path::new(text(path, "path")?)).map_err(|e| Fail::new(CeStatus::InvalidInput, e))?;
        put(out, CeRuleSet(rules))
    })
}

/// Parses ruleset JSON held in memory.
///
/// # Safety
/// `json` must be a valid C string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn ce_ruleset_from_json(json: *const c_char, out: *mut *mut CeRuleSet) -> CeStatus {
    guard(|| {
        let rules = RuleSet::from_json(text(json, "json")?).map_err(|e| Fail::new(CeStatus::InvalidInput, e))?;
        put(out, CeRuleSet(rules))
    })
}

/// # Safety
/// `rules` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn ce_ruleset_len(rules: *const CeRuleSet) -> usize {
    rules.as_ref().map_or(0, |r| r.0.len())
}

/// # Safety
/// `rules` must come from this library and not have been freed.
#[no_mangle]
pub unsafe extern "C" fn ce_ruleset_free(rules: *mut CeRuleSet) {
    free(rules)
}

/// Loads relation metadata. A null path gives generic templates for every relation.
///
/// # Safety
/// `path` must be null or a valid C string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn ce_meta_load(path: *const c_char, out: *mut *mut CeMeta) -> CeStatus {
    guard(|| {
        let meta = match opt_text(path, "path")? {
            Some(p) => MetaTable::load(Path::new(p)).map_err(|e| Fail::new(CeStatus::InvalidInput, e))?,
            None => MetaTable::with_fallback(),
        };
        put(out, CeMeta(meta))
    })
}

/// # Safety
/// `meta` must come from this library and not have been freed.
#[no_mangle]
pub unsafe extern "C" fn ce_meta_free(meta: *mut CeMeta) {
    free(meta)
}

/// Oracle answering from `store`, with an optional `label<TAB>rule` judge table.
/// The store handle may be freed afterwards.
///
/// # Safety
/// `store` must be a live handle; `judge_table_path` null or a valid C string.
#[no_mangle]
pub unsafe extern "C" fn ce_oracle_mock_new(
    store: *const CeStore,
    judge_table_path: *const c_char,
    out: *mut *mut CeOracle,
) -> CeStatus {
    guard(|| {
        let store = handle(store, "store")?;
        let mut oracle = StoreOracle::new(Arc::clone(&store.0));
        if let Some(p) = opt_text(judge_table_path, "judge_table_path")? {
            let table = JudgeTable::load(Path::new(p)).map_err(|e| Fail::new(CeStatus::Io, e))?;
            oracle = oracle.with_judge(table);
        }
        put(out, CeOracle(Box::new(oracle)))
    })
}

/// # Safety
/// `oracle` must come from this library and not have been freed.
#[no_mangle]
pub unsafe extern "C" fn ce_oracle_free(oracle: *mut CeOracle) {
    free(oracle)
}

/// Expands `edit` (`subject|relation|object`) into a batch, written to
/// `out_jsonl` in the batch-file format. `depth` 0 means the default.
///
/// # Safety
/// Handles must be live; `edit` a valid C string; `out_jsonl` writable.
#[no_mangle]
pub unsafe extern "C" fn ce_expand(
    edit: *const c_char,
    rules: *const CeRuleSet,
    oracle: *const CeOracle,
    meta: *const CeMeta,
    depth: u32,
    out_jsonl: *mut *mut c_char,
) -> CeStatus {
    guard(|| {
        let edit: EditRequest = text(edit, "edit")?
            .parse()
            .map_err(|e| Fail::new(CeStatus::InvalidInput, e))?;
        let (rules, oracle, meta) = (handle(rules, "rules")?, handle(oracle, "oracle")?, handle(meta, "meta")?);
        let mut cfg = ExpansionConfig::default();
        if depth > 0 {
            cfg.depth = depth as usize;
        }
        let batch = expand(&edit, &rules.0, oracle.0.as_ref(), &meta.0, &cfg).map_err(|e| {
            use chainedit::chain::ExpandError as E;
            let status = match &e {
                E::Oracle { .. } => CeStatus::Oracle,
                E::Conflict { .. } => CeStatus::Conflict,
                _ => CeStatus::InvalidInput,
            };
            Fail::new(status, e)
        })?;
        put_string(out_jsonl, batch.to_jsonl())
    })
}

/// Parses a dot-path expression and returns its canonical text.
///
/// # Safety
/// `path` must be a valid C string; `out_canonical` writable.
#[no_mangle]
pub unsafe extern "C" fn ce_parse_path(path: *const c_char, out_canonical: *mut *mut c_char) -> CeStatus {
    guard(|| {
        let p = parse_path(text(path, "path")?).map_err(|e| Fail::new(CeStatus::InvalidInput, e))?;
        put_string(out_canonical, p.to_string())
    })
}

/// Sets `*out_correct` to 1 when `answer` contains one of the gold strings
/// (a JSON array) as whole tokens, else 0.
///
/// # Safety
/// Strings must be valid C strings; `out_correct` writable.
#[no_mangle]
pub unsafe extern "C" fn ce_score_answer(
    answer: *const c_char,
    golds_json: *const c_char,
    out_correct: *mut i32,
) -> CeStatus {
    guard(|| {
        let golds: Vec<String> = serde_json::from_str(text(golds_json, "golds_json")?)
            .map_err(|e| Fail::new(CeStatus::InvalidInput, format!("golds_json: {e}")))?;
        let hit = score_answer(text(answer, "answer")?, &golds);
        if out_correct.is_null() {
            return Err(Fail::new(CeStatus::NullArgument, "out_correct is null"));
        }
        *out_correct = i32::from(hit);
        Ok(())
    })
}
