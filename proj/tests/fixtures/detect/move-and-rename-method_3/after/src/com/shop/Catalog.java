package com.shop;

import java.util.List;

public class Catalog {
    private List<String> names;

    public boolean has(String q) {
        return names.contains(q);
    }

    private static String label(String s) {
        String t = s.trim();
        return t.toUpperCase();
    }
}
