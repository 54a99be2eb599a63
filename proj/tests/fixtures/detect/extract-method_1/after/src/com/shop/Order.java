package com.shop;

import java.util.List;

public class Order {
    private final List<Integer> prices;

    public Order(List<Integer> prices) {
        this.prices = prices;
    }

    public int total(int discount) {
        int sum = subtotal();
        int result = sum - discount;
        return result;
    }

    private int subtotal() {
        int sum = 0;
        for (int p : prices) {
            sum += p;
        }
        return sum;
    }

    private static String label(String s) {
        String t = s.trim();
        return t.toUpperCase();
    }
}
