package com.shop;

public class Printer {
    public void print(String title, int pages) {
        System.out.println("==");
        System.out.println(title);
        for (int i = 0; i < pages; i++) {
            System.out.println(i);
        }
    }

    private static String label(String s) {
        String t = s.trim();
        return t.toUpperCase();
    }
}
