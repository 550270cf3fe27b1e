use std::collections::BTreeMap;
use std::fs;
use std::path::Path;
use std::sync::Arc;

use adaptive_pldf::route::{demo_route, load_route, two_drop_route, RouteMap};

use crate::ServiceError;

/// Immutable set of routes shared by all sessions, keyed by route name.
#[derive(Debug, Clone, Default)]
pub struct RouteRegistry {
    routes: BTreeMap<String, Arc<RouteMap>>,
}

impl RouteRegistry {
    pub fn new(routes: impl IntoIterator<Item = RouteMap>) -> Self {
        Self { routes: routes.into_iter().map(|r| (r.name().to_string(), Arc::new(r))).collect() }
    }

    /// The demo and two-drop routes.
    pub fn builtin() -> Self {
        Self::new([demo_route(), two_drop_route()])
    }

    /// Every `*.json` route file in `dir`.
    pub fn from_dir(dir: &Path) -> Result<Self, ServiceError> {
        let io = |e| ServiceError::Io { path: dir.display().to_string(), source: e };
        let mut paths: Vec<_> = fs::read_dir(dir)
            .map_err(io)?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.extension().is_some_and(|x| x == "json"))
            .collect();
        paths.sort();
        let mut routes = Vec::with_capacity(paths.len());
        for path in paths {
            let text = fs::read_to_string(&path)
                .map_err(|e| ServiceError::Io { path: path.display().to_string(), source: e })?;
            let route = load_route(&text)
                .map_err(|e| ServiceError::Route { path: path.display().to_string(), source: e })?;
            routes.push(route);
        }
        if routes.is_empty() {
            return Err(ServiceError::NoRoutes(dir.display().to_string()));
        }
        Ok(Self::new(routes))
    }

    pub fn get(&self, name: &str) -> Option<Arc<RouteMap>> {
        self.routes.get(name).cloned()
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.routes.keys().map(String::as_str)
    }

    pub fn iter(&self) -> impl Iterator<Item = &RouteMap> {
        self.routes.values().map(|r| r.as_ref())
    }
}
