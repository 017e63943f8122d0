/* C bindings for the gendp chat session.
 *
 * Usage sketch:
 *
 *   GendpChat *chat = NULL;
 *   if (gendp_chat_open("model.ckpt", "kb.json", "ontology.json",
 *                       "templates.json", &chat) != GENDP_OK) {
 *       fprintf(stderr, "%s\n", gendp_last_error());
 *       return 1;
 *   }
 *   char *reply = NULL;
 *   if (gendp_chat_respond(chat, "i want cheap french food", &reply) == GENDP_OK) {
 *       puts(reply);
 *       gendp_string_free(reply);
 *   }
 *   gendp_chat_close(chat);
 *
 * Handles are not thread-safe; use one per thread or lock around them.
 * Error messages from gendp_last_error() are thread-local and remain
 * valid until the next bindings call on that thread.
 */

#ifndef GENDP_H
#define GENDP_H

#ifdef __cplusplus
extern "C" {
#endif

/* An in-progress conversation (opaque). */
typedef struct GendpChat GendpChat;

typedef enum GendpStatus {
    GENDP_OK = 0,
    GENDP_NULL_ARGUMENT = 1,   /* a required pointer was NULL */
    GENDP_INVALID_UTF8 = 2,    /* a string argument was not UTF-8 */
    GENDP_LOAD_FAILED = 3,     /* checkpoint, KB, ontology, or templates unreadable */
    GENDP_EMPTY_UTTERANCE = 4, /* the utterance tokenized to nothing */
    GENDP_MODEL_FAILED = 5     /* prediction failed; see gendp_last_error() */
} GendpStatus;

/* Crate version as a static string; do not free. */
const char *gendp_version(void);

/* Message for the most recent failed call on this thread; empty string
 * when the last call succeeded. Valid until the next bindings call. */
const char *gendp_last_error(void);

/* Loads a trained checkpoint plus its knowledge base, ontology, and
 * response templates. On success writes a fresh handle to *out_chat;
 * on failure writes NULL. Release with gendp_chat_close(). */
GendpStatus gendp_chat_open(const char *checkpoint_path,
                            const char *kb_path,
                            const char *ontology_path,
                            const char *templates_path,
                            GendpChat **out_chat);

/* Runs one dialogue turn. On success writes the reply (UTF-8, caller
 * frees with gendp_string_free) to *out_reply; on failure writes NULL
 * and leaves the dialogue history unchanged. */
GendpStatus gendp_chat_respond(GendpChat *chat,
                               const char *utterance,
                               char **out_reply);

/* Clears the dialogue history, keeping the model loaded. */
GendpStatus gendp_chat_reset(GendpChat *chat);

/* Releases a handle. NULL is a no-op. */
void gendp_chat_close(GendpChat *chat);

/* Releases a string returned by these bindings. NULL is a no-op. */
void gendp_string_free(char *s);

#ifdef __cplusplus
} /* extern "C" */
#endif

#endif /* GENDP_H */
