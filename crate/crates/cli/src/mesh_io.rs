//! Mesh files: the native text format and read-only Gmsh MSH 2.2 ASCII import.
//!
//! Native format (ids are 0-based and contiguous):
//!
//! ```text
//! VERTICES 4
//! 0 0 0
//! 1 1 0
//! ...
//! TRIANGLES 2
//! 0 0 1 2 Solid
//! ...
//! EDGES 5
//! 0 0 1 GammaD
//! ...
//! ```

use std::collections::{BTreeMap, HashMap};
use std::fmt::Write as _;
use std::path::Path;

use anyhow::{anyhow, bail, ensure, Context, Result};
use elastoacoustic::{EdgeTag, Mesh, Subdomain};

pub fn write_native(mesh: &Mesh) -> String {
    let mut s = String::new();
    writeln!(s, "VERTICES {}", mesh.n_vertices()).unwrap();
    for (i, v) in mesh.vertices().iter().enumerate() {
        writeln!(s, "{i} {:?} {:?}", v[0], v[1]).unwrap();
    }
    writeln!(s, "TRIANGLES {}", mesh.n_triangles()).unwrap();
    for (i, t) in mesh.triangles().iter().enumerate() {
        let v = t.vertices;
        writeln!(s, "{i} {} {} {} {}", v[0], v[1], v[2], t.subdomain).unwrap();
    }
    writeln!(s, "EDGES {}", mesh.n_edges()).unwrap();
    for (i, e) in mesh.edges().iter().enumerate() {
        writeln!(s, "{i} {} {} {}", e.vertices[0], e.vertices[1], e.tag).unwrap();
    }
    s
}

struct Section<'a> {
    lines: std::iter::Peekable<std::iter::Enumerate<std::str::Lines<'a>>>,
}

impl<'a> Section<'a> {
    fn next_record(&mut self) -> Option<(usize, Vec<&'a str>)> {
        for (n, line) in self.lines.by_ref() {
            let line = line.trim();
            if !line.is_empty() && !line.starts_with('#') {
                return Some((n + 1, line.split_whitespace().collect()));
            }
        }
        None
    }

    fn header(&mut self, name: &str) -> Result<usize> {
        let (n, rec) = self.next_record().ok_or_else(|| anyhow!("missing {name} section"))?;
        ensure!(rec.len() == 2 && rec[0] == name, "line {n}: expected `{name} <count>`");
        rec[1].parse().with_context(|| format!("line {n}: bad count"))
    }

    fn rows(&mut self, name: &str, width: usize) -> Result<Vec<(usize, Vec<&'a str>)>> {
        let count = self.header(name)?;
        let mut out = Vec::with_capacity(count);
        for k in 0..count {
            let (n, rec) = self.next_record().ok_or_else(|| anyhow!("{name}: expected {count} rows, got {k}"))?;
            ensure!(rec.len() == width, "line {n}: expected {width} fields");
            ensure!(rec[0].parse::<usize>().ok() == Some(k), "line {n}: ids must be 0-based and contiguous");
            out.push((n, rec));
        }
        Ok(out)
    }
}

fn num<T: std::str::FromStr>(field: &str, line: usize) -> Result<T>
where
    T::Err: std::error::Error + Send + Sync + 'static,
{
    field.parse().with_context(|| format!("line {line}: cannot parse `{field}`"))
}

pub fn read_native(text: &str) -> Result<Mesh> {
    let mut sec = Section { lines: text.lines().enumerate().peekable() };
    let vertices = sec
        .rows("VERTICES", 3)?
        .into_iter()
        .map(|(n, r)| Ok([num(r[1], n)?, num(r[2], n)?]))
        .collect::<Result<Vec<[f64; 2]>>>()?;
    let triangles = sec
        .rows("TRIANGLES", 5)?
        .into_iter()
        .map(|(n, r)| {
            let sub: Subdomain = r[4].parse().with_context(|| format!("line {n}"))?;
            Ok(([num(r[1], n)?, num(r[2], n)?, num(r[3], n)?], sub))
        })
        .collect::<Result<Vec<_>>>()?;
    let mut tags = HashMap::new();
    for (n, r) in sec.rows("EDGES", 4)? {
        let (a, b): (usize, usize) = (num(r[1], n)?, num(r[2], n)?);
        let tag: EdgeTag = r[3].parse().with_context(|| format!("line {n}"))?;
        tags.insert([a.min(b), a.max(b)], tag);
    }
    if let Some((n, _)) = sec.next_record() {
        bail!("line {n}: trailing content after EDGES");
    }
    let mesh = Mesh::from_raw(vertices, &triangles, |key, _| tags.get(&key).copied().filter(|t| t.is_boundary()))?;
    for e in mesh.edges() {
        let declared = tags.get(&e.vertices).copied();
        ensure!(
            declared.is_none() || declared == Some(e.tag),
            "edge {:?} declared {} but the mesh implies {}",
            e.vertices,
            declared.unwrap(),
            e.tag
        );
    }
    Ok(mesh)
}

/// Role of a Gmsh physical group.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GmshRole {
    Region(Subdomain),
    Boundary(EdgeTag),
}

impl std::str::FromStr for GmshRole {
    type Err = anyhow::Error;
    fn from_str(s: &str) -> Result<Self> {
        if let Ok(sub) = s.parse::<Subdomain>() {
            return Ok(GmshRole::Region(sub));
        }
        match s.parse::<EdgeTag>() {
            Ok(t @ (EdgeTag::GammaD | EdgeTag::GammaN | EdgeTag::Gamma0)) => Ok(GmshRole::Boundary(t)),
            _ => bail!("`{s}` is not Solid, Fluid, GammaD, GammaN or Gamma0"),
        }
    }
}

/// Parses a `physical id -> role` table as found in the run configuration.
pub fn parse_tag_map(map: &BTreeMap<String, String>) -> Result<HashMap<i64, GmshRole>> {
    map.iter()
        .map(|(k, v)| {
            let id: i64 = k.parse().with_context(|| format!("physical id `{k}`"))?;
            Ok((id, v.parse()?))
        })
        .collect()
}

/// Reads a Gmsh 2.2 ASCII mesh, keeping triangles (type 2) and boundary lines
/// (type 1). Physical ids resolve through `tags` first, then through the
/// file's `$PhysicalNames`. Triangles are reoriented counter-clockwise and
/// unused nodes dropped.
pub fn read_gmsh(text: &str, tags: &HashMap<i64, GmshRole>) -> Result<Mesh> {
    let mut lines = text.lines().map(str::trim).enumerate().filter(|(_, l)| !l.is_empty());
    let mut names: HashMap<(i64, i64), String> = HashMap::new();
    let mut nodes: HashMap<i64, [f64; 2]> = HashMap::new();
    let mut tris: Vec<([i64; 3], i64)> = Vec::new();
    let mut segs: Vec<([i64; 2], i64)> = Vec::new();
    let mut seen_format = false;
    while let Some((n, line)) = lines.next() {
        match line {
            "$MeshFormat" => {
                let (n, fmt) = lines.next().ok_or_else(|| anyhow!("truncated $MeshFormat"))?;
                let f: Vec<&str> = fmt.split_whitespace().collect();
                ensure!(f.len() == 3 && f[0].starts_with("2.2"), "line {}: only MSH 2.2 is supported", n + 1);
                ensure!(f[1] == "0", "line {}: binary MSH is not supported", n + 1);
                seen_format = true;
            }
            "$PhysicalNames" => {
                let (n, c) = lines.next().ok_or_else(|| anyhow!("truncated $PhysicalNames"))?;
                let count: usize = num(c, n + 1)?;
                for _ in 0..count {
                    let (n, l) = lines.next().ok_or_else(|| anyhow!("truncated $PhysicalNames"))?;
                    let f: Vec<&str> = l.splitn(3, ' ').collect();
                    ensure!(f.len() == 3, "line {}: bad physical name", n + 1);
                    names.insert((num(f[0], n + 1)?, num(f[1], n + 1)?), f[2].trim_matches('"').to_string());
                }
            }
            "$Nodes" => {
                let (n, c) = lines.next().ok_or_else(|| anyhow!("truncated $Nodes"))?;
                let count: usize = num(c, n + 1)?;
                for _ in 0..count {
                    let (n, l) = lines.next().ok_or_else(|| anyhow!("truncated $Nodes"))?;
                    let f: Vec<&str> = l.split_whitespace().collect();
                    ensure!(f.len() >= 3, "line {}: bad node", n + 1);
                    nodes.insert(num(f[0], n + 1)?, [num(f[1], n + 1)?, num(f[2], n + 1)?]);
                }
            }
            "$Elements" => {
                let (n, c) = lines.next().ok_or_else(|| anyhow!("truncated $Elements"))?;
                let count: usize = num(c, n + 1)?;
                for _ in 0..count {
                    let (n, l) = lines.next().ok_or_else(|| anyhow!("truncated $Elements"))?;
                    let f = l.split_whitespace().map(|x| num::<i64>(x, n + 1)).collect::<Result<Vec<_>>>()?;
                    ensure!(f.len() >= 3, "line {}: bad element", n + 1);
                    let ntags = f[2] as usize;
                    ensure!(ntags >= 1, "line {}: element without a physical tag", n + 1);
                    let physical = f[3];
                    let conn = &f[3 + ntags..];
                    match f[1] {
                        1 if conn.len() == 2 => segs.push(([conn[0], conn[1]], physical)),
                        2 if conn.len() == 3 => tris.push(([conn[0], conn[1], conn[2]], physical)),
                        1 | 2 => bail!("line {}: wrong node count", n + 1),
                        _ => {}
                    }
                }
            }
            l if l.starts_with("$End") => {}
            l if l.starts_with('$') => {
                // skip unknown sections
                for (_, l2) in lines.by_ref() {
                    if l2 == format!("$End{}", &l[1..]) {
                        break;
                    }
                }
            }
            other => bail!("line {}: unexpected `{other}`", n + 1),
        }
    }
    ensure!(seen_format, "missing $MeshFormat");
    ensure!(!tris.is_empty(), "no triangles in file");

    let role = |dim: i64, id: i64| -> Result<GmshRole> {
        if let Some(r) = tags.get(&id) {
            return Ok(*r);
        }
        let name = names.get(&(dim, id)).ok_or_else(|| anyhow!("physical id {id} has no role in the tag map"))?;
        name.parse().with_context(|| format!("physical group {id}"))
    };

    let mut index: BTreeMap<i64, usize> = BTreeMap::new();
    for (c, _) in &tris {
        for v in c {
            index.insert(*v, 0);
        }
    }
    let mut vertices = Vec::with_capacity(index.len());
    for (k, slot) in index.iter_mut() {
        *slot = vertices.len();
        vertices.push(*nodes.get(k).ok_or_else(|| anyhow!("element references missing node {k}"))?);
    }
    let mut triangles = Vec::with_capacity(tris.len());
    for (c, phys) in &tris {
        let GmshRole::Region(sub) = role(2, *phys)? else {
            bail!("physical group {phys} on triangles must be Solid or Fluid");
        };
        let mut v = [index[&c[0]], index[&c[1]], index[&c[2]]];
        let (a, b, d) = (vertices[v[0]], vertices[v[1]], vertices[v[2]]);
        if (b[0] - a[0]) * (d[1] - a[1]) - (b[1] - a[1]) * (d[0] - a[0]) < 0.0 {
            v.swap(1, 2);
        }
        triangles.push((v, sub));
    }
    let mut boundary = HashMap::new();
    for (c, phys) in &segs {
        let GmshRole::Boundary(tag) = role(1, *phys)? else {
            bail!("physical group {phys} on lines must be a boundary tag");
        };
        let (Some(&a), Some(&b)) = (index.get(&c[0]), index.get(&c[1])) else {
            bail!("boundary line {c:?} is not on a triangle");
        };
        boundary.insert([a.min(b), a.max(b)], tag);
    }
    Ok(Mesh::from_raw(vertices, &triangles, |key, _| boundary.get(&key).copied())?)
}

/// Reads a native mesh, or a Gmsh file when the extension is `.msh`.
pub fn read_mesh_file(path: &Path, tags: &BTreeMap<String, String>) -> Result<Mesh> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let mesh = if path.extension().is_some_and(|e| e == "msh") {
        read_gmsh(&text, &parse_tag_map(tags)?)
    } else {
        read_native(&text)
    };
    mesh.with_context(|| format!("in {}", path.display()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use elastoacoustic::mesh::{build_cavity_mesh, validate};
    use elastoacoustic::GeometrySpec;

    #[test]
    fn native_round_trip() {
        let mesh = build_cavity_mesh(&GeometrySpec::omega2(), 1).unwrap();
        let text = write_native(&mesh);
        let back = read_native(&text).unwrap();
        assert_eq!(back.vertices(), mesh.vertices());
        assert_eq!(back.n_triangles(), mesh.n_triangles());
        for (a, b) in back.triangles().iter().zip(mesh.triangles()) {
            assert_eq!((a.vertices, a.subdomain), (b.vertices, b.subdomain));
        }
        let tags = |m: &Mesh| m.edges().iter().map(|e| (e.vertices, e.tag)).collect::<Vec<_>>();
        assert_eq!(tags(&back), tags(&mesh));
        assert_eq!(write_native(&back), text);
    }

    #[test]
    fn native_rejects_inconsistent_input() {
        assert!(read_native("VERTICES 1\n0 0 0\n").is_err());
        let bad_id = "VERTICES 3\n0 0 0\n2 1 0\n1 0 1\nTRIANGLES 0\nEDGES 0\n";
        assert!(read_native(bad_id).is_err());
        let wrong_tag = "VERTICES 3\n0 0 0\n1 1 0\n2 0 1\nTRIANGLES 1\n0 0 1 2 Solid\nEDGES 1\n0 0 1 Interface\n";
        assert!(read_native(wrong_tag).is_err());
    }

    const SQUARE: &str = r#"$MeshFormat
2.2 0 8
$EndMeshFormat
$PhysicalNames
3
1 10 "GammaD"
2 1 "Solid"
2 2 "Fluid"
$EndPhysicalNames
$Nodes
5
1 0 0 0
2 1 0 0
3 1 1 0
4 0 1 0
9 5 5 0
$EndNodes
$Elements
4
1 15 2 0 9 9
2 1 2 10 1 1 2
3 2 2 1 1 1 3 2
4 2 2 2 2 1 4 3
$EndElements
"#;

    #[test]
    fn gmsh_physical_groups() {
        let mesh = read_gmsh(SQUARE, &HashMap::new()).unwrap();
        assert_eq!(mesh.n_vertices(), 4, "the isolated point node is dropped");
        assert_eq!(mesh.count_subdomain(Subdomain::Solid), 1);
        assert_eq!(mesh.count_subdomain(Subdomain::Fluid), 1);
        assert!((0..2).all(|t| mesh.signed_area(t) > 0.0), "reoriented counter-clockwise");
        assert_eq!(mesh.edges_tagged(EdgeTag::GammaD).count(), 1);
        assert_eq!(mesh.edges_tagged(EdgeTag::Interface).count(), 1);
        assert!(validate(&mesh).passed(), "{}", validate(&mesh));

        let mut map = BTreeMap::new();
        map.insert("1".to_string(), "Fluid".to_string());
        let flipped = read_gmsh(SQUARE, &parse_tag_map(&map).unwrap()).unwrap();
        assert_eq!(flipped.count_subdomain(Subdomain::Fluid), 2);
    }

    #[test]
    fn gmsh_errors() {
        assert!(read_gmsh(&SQUARE.replace("2.2 0 8", "4.1 0 8"), &HashMap::new()).is_err());
        assert!(read_gmsh(&SQUARE.replace("2 1 \"Solid\"", "2 1 \"Bogus\""), &HashMap::new()).is_err());
        assert!(read_gmsh(&SQUARE.replace("3 2 2 1 1 1 3 2", "3 2 2 1 1 1 3 77"), &HashMap::new()).is_err());
    }
}
