//! C bindings for the chat session: an opaque handle, integer status
//! codes, and UTF-8 strings the caller releases with
//! `gendp_string_free`. The committed `include/gendp.h` mirrors this
//! surface; a unit test keeps the two in sync.
//!
//! Error reporting: every failing call stores a message retrievable
//! with `gendp_last_error()`; the pointer stays valid on the calling
//! thread until the next bindings call.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::path::Path;

use gendp::bundle::ModelBundle;
use gendp::chat::{ChatError, ChatSession};
use gendp::kb::{load_ontology, Kb};
use gendp::nlg::TemplateBank;

/// An in-progress conversation. Not thread-safe: use one handle per
/// thread, or serialize access externally.
pub struct GendpChat {
    session: ChatSession,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GendpStatus {
    Ok = 0,
    NullArgument = 1,
    InvalidUtf8 = 2,
    LoadFailed = 3,
    EmptyUtterance = 4,
    ModelFailed = 5,
}

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn fail(status: GendpStatus, message: &str) -> GendpStatus {
    let sanitized = message.replace('\0', " ");
    LAST_ERROR.with(|slot| {
        *slot.borrow_mut() = CString::new(sanitized).expect("NULs stripped");
    });
    status
}

fn clear_error() {
    LAST_ERROR.with(|slot| *slot.borrow_mut() = CString::default());
}

/// Message for the most recent failed call on this thread; empty string
/// when the last call succeeded. Valid until the next bindings call.
#[no_mangle]
pub extern "C" fn gendp_last_error() -> *const c_char {
    LAST_ERROR.with(|slot| slot.borrow().as_ptr())
}

/// Crate version as a static NUL-terminated string; never freed.
#[no_mangle]
pub extern "C" fn gendp_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr() as *const c_char
}

/// # Safety
/// `ptr` must be null or a NUL-terminated string valid for reads.
unsafe fn utf8_arg<'a>(ptr: *const c_char, what: &str) -> Result<&'a str, GendpStatus> {
    if ptr.is_null() {
        return Err(fail(GendpStatus::NullArgument, &format!("{what} is NULL")));
    }
    CStr::from_ptr(ptr)
        .to_str()
        .map_err(|_| fail(GendpStatus::InvalidUtf8, &format!("{what} is not valid UTF-8")))
}

/// Loads a checkpoint plus its KB, ontology, and template bank, and
/// hands back a fresh conversation in `*out_chat` (NULL on failure).
/// Release with `gendp_chat_close`.
///
/// # Safety
/// Path arguments must be NUL-terminated strings valid for reads;
/// `out_chat` must be valid for writes.
#[no_mangle]
pub unsafe extern "C" fn gendp_chat_open(
    checkpoint_path: *const c_char,
    kb_path: *const c_char,
    ontology_path: *const c_char,
    templates_path: *const c_char,
    out_chat: *mut *mut GendpChat,
) -> GendpStatus {
    if out_chat.is_null() {
        return fail(GendpStatus::NullArgument, "out_chat is NULL");
    }
    *out_chat = std::ptr::null_mut();
    let ckpt = match utf8_arg(checkpoint_path, "checkpoint_path") {
        Ok(v) => v,
        Err(s) => return s,
    };
    let kb = match utf8_arg(kb_path, "kb_path") {
        Ok(v) => v,
        Err(s) => return s,
    };
    let ont = match utf8_arg(ontology_path, "ontology_path") {
        Ok(v) => v,
        Err(s) => return s,
    };
    let tpl = match utf8_arg(templates_path, "templates_path") {
        Ok(v) => v,
        Err(s) => return s,
    };

    match open_session(Path::new(ckpt), Path::new(kb), Path::new(ont), Path::new(tpl)) {
        Ok(session) => {
            *out_chat = Box::into_raw(Box::new(GendpChat { session }));
            clear_error();
            GendpStatus::Ok
        }
        Err(message) => fail(GendpStatus::LoadFailed, &message),
    }
}

fn open_session(ckpt: &Path, kb: &Path, ont: &Path, tpl: &Path) -> Result<ChatSession, String> {
    let bundle = ModelBundle::load(ckpt).map_err(|e| format!("{}: {e}", ckpt.display()))?;
    let kb = Kb::load(kb).map_err(|e| format!("{}: {e}", kb.display()))?;
    let ontology = load_ontology(ont).map_err(|e| format!("{}: {e}", ont.display()))?;
    let templates =
        TemplateBank::load(tpl, &bundle.lexicons).map_err(|e| format!("{}: {e}", tpl.display()))?;
    Ok(ChatSession::new(bundle, kb, ontology, templates))
}

/// Runs one turn. On success `*out_reply` holds the lexicalized reply;
/// free it with `gendp_string_free`. On failure `*out_reply` is NULL
/// and the session history is unchanged.
///
/// # Safety
/// `chat` must come from `gendp_chat_open` and not be closed;
/// `utterance` must be a NUL-terminated string valid for reads;
/// `out_reply` must be valid for writes.
#[no_mangle]
pub unsafe extern "C" fn gendp_chat_respond(
    chat: *mut GendpChat,
    utterance: *const c_char,
    out_reply: *mut *mut c_char,
) -> GendpStatus {
    if out_reply.is_null() {
        return fail(GendpStatus::NullArgument, "out_reply is NULL");
    }
    *out_reply = std::ptr::null_mut();
    if chat.is_null() {
        return fail(GendpStatus::NullArgument, "chat is NULL");
    }
    let text = match utf8_arg(utterance, "utterance") {
        Ok(t) => t,
        Err(s) => return s,
    };

    match (*chat).session.respond(text) {
        Ok(turn) => {
            let reply = CString::new(turn.reply.replace('\0', " ")).expect("NULs stripped");
            *out_reply = reply.into_raw();
            clear_error();
            GendpStatus::Ok
        }
        Err(ChatError::EmptyUtterance) => {
            fail(GendpStatus::EmptyUtterance, "utterance has no usable tokens")
        }
        Err(e) => fail(GendpStatus::ModelFailed, &e.to_string()),
    }
}

/// Clears the dialogue history, keeping the model loaded.
///
/// # Safety
/// `chat` must come from `gendp_chat_open` and not be closed.
#[no_mangle]
pub unsafe extern "C" fn gendp_chat_reset(chat: *mut GendpChat) -> GendpStatus {
    if chat.is_null() {
        return fail(GendpStatus::NullArgument, "chat is NULL");
    }
    (*chat).session.reset();
    clear_error();
    GendpStatus::Ok
}

/// Releases a handle. NULL is a no-op.
///
/// # Safety
/// `chat` must come from `gendp_chat_open` and not be closed twice.
#[no_mangle]
pub unsafe extern "C" fn gendp_chat_close(chat: *mut GendpChat) {
    if !chat.is_null() {
        drop(Box::from_raw(chat));
    }
}

/// Releases a string returned by these bindings. NULL is a no-op.
///
/// # Safety
/// `s` must come from `gendp_chat_respond` and not be freed twice.
#[no_mangle]
pub unsafe extern "C" fn gendp_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    /// The committed header is written by hand (no generator in the
    /// build), so pin every exported symbol and status value to it.
    #[test]
    fn the_header_matches_the_exported_surface() {
        let header = include_str!("../include/gendp.h");
        for symbol in [
            "gendp_version(void)",
            "gendp_last_error(void)",
            "gendp_chat_open(",
            "gendp_chat_respond(",
            "gendp_chat_reset(",
            "gendp_chat_close(",
            "gendp_string_free(",
        ] {
            assert!(header.contains(symbol), "header is missing `{symbol}`");
        }
        for (name, value) in [
            ("GENDP_OK", GendpStatus::Ok as i32),
            ("GENDP_NULL_ARGUMENT", GendpStatus::NullArgument as i32),
            ("GENDP_INVALID_UTF8", GendpStatus::InvalidUtf8 as i32),
            ("GENDP_LOAD_FAILED", GendpStatus::LoadFailed as i32),
            ("GENDP_EMPTY_UTTERANCE", GendpStatus::EmptyUtterance as i32),
            ("GENDP_MODEL_FAILED", GendpStatus::ModelFailed as i32),
        ] {
            let want = format!("{name} = {value}");
            assert!(header.contains(&want), "header is missing `{want}`");
        }
    }

    #[test]
    fn errors_land_in_the_thread_local_slot() {
        let status = unsafe {
            gendp_chat_open(
                std::ptr::null(),
                std::ptr::null(),
                std::ptr::null(),
                std::ptr::null(),
                std::ptr::null_mut(),
            )
        };
        assert_eq!(status, GendpStatus::NullArgument);
        let msg = unsafe { CStr::from_ptr(gendp_last_error()) }.to_str().unwrap();
        assert!(msg.contains("NULL"));
    }
}
