//! The four static routes the agent origin serves. A build of the browser
//! component can replace the built-in pages via an assets directory.

use std::path::{Path, PathBuf};

pub const ORIGIN_PLACEHOLDER: &str = "__AGENT_ORIGIN__";

pub struct Asset {
    pub route: &'static str,
    pub file: &'static str,
    pub content_type: &'static str,
    builtin: &'static str,
}

pub const ASSETS: [Asset; 4] = [
    Asset { route: "/overlay/read.html", file: "overlay/read.html", content_type: "text/html; charset=utf-8", builtin: READ_HTML },
    Asset { route: "/overlay/compose.html", file: "overlay/compose.html", content_type: "text/html; charset=utf-8", builtin: COMPOSE_HTML },
    Asset { route: "/frontend.js", file: "frontend.js", content_type: "text/javascript; charset=utf-8", builtin: FRONTEND_JS },
    Asset { route: "/bookmarklet.js", file: "bookmarklet.js", content_type: "text/javascript; charset=utf-8", builtin: BOOKMARKLET_JS },
];

/// Resolved asset bodies with the agent origin substituted.
pub struct AssetBundle {
    bodies: Vec<String>,
}

impl AssetBundle {
    pub fn load(dir: Option<&Path>, origin: &str) -> std::io::Result<Self> {
        let mut bodies = Vec::with_capacity(ASSETS.len());
        for asset in &ASSETS {
            let text = match dir {
                Some(d) => {
                    let path: PathBuf = d.join(asset.file);
                    std::fs::read_to_string(&path).map_err(|e| {
                        std::io::Error::new(e.kind(), format!("{}: {e}", path.display()))
                    })?
                }
                None => asset.builtin.to_owned(),
            };
            bodies.push(text.replace(ORIGIN_PLACEHOLDER, origin));
        }
        Ok(AssetBundle { bodies })
    }

    pub fn get(&self, route: &str) -> Option<(&'static str, &str)> {
        ASSETS
            .iter()
            .position(|a| a.route == route)
            .map(|i| (ASSETS[i].content_type, self.bodies[i].as_str()))
    }
}

const READ_HTML: &str = r#"<!doctype html>
<html><head><meta charset="utf-8"><title>MessageGuard read</title>
<style>body{background:#1b1b1f;color:#e8e8ec;font:14px sans-serif;margin:0;padding:8px}</style>
</head><body><div id="content">Waiting for a message…</div>
<script src="__AGENT_ORIGIN__/frontend.js" data-overlay="read"></script></body></html>
"#;

const COMPOSE_HTML: &str = r#"<!doctype html>
<html><head><meta charset="utf-8"><title>MessageGuard compose</title>
<style>body{background:#1b1b1f;color:#e8e8ec;font:14px sans-serif;margin:0;padding:8px}
#editor{min-height:4em;border:1px solid #555;padding:4px}</style>
</head><body><div id="editor" contenteditable="true"></div><button id="send">Encrypt</button>
<script src="__AGENT_ORIGIN__/frontend.js" data-overlay="compose"></script></body></html>
"#;

const FRONTEND_JS: &str = r#"// Placeholder: start the agent with --assets pointing at a frontend build.
window.MESSAGEGUARD_AGENT = "__AGENT_ORIGIN__";
"#;

const BOOKMARKLET_JS: &str = r#"(function(){var s=document.createElement('script');s.src='__AGENT_ORIGIN__/frontend.js';s.onerror=function(){window.open('__AGENT_ORIGIN__/overlay/compose.html');};document.body.appendChild(s);})();
"#;
