"""twinmesh: edge digital twins with tag-based access control"""
