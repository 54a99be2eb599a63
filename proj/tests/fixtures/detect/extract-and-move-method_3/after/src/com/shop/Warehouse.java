package com.shop;

import com.shop.util.Sums;
import java.util.Map;

public class Warehouse {
    public int capacity(Map<String, Integer> bins) {
        return Sums.of(bins);
    }

    private static String label(String s) {
        String t = s.trim();
        return t.toUpperCase();
    }
}
